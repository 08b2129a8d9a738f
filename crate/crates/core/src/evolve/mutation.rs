use serde::{Deserialize, Serialize};

use crate::molgraph::{AtomType, BondOrder, GraphError, MolecularGraph};

/// A local edit of a molecular graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MutationOp {
    /// Attach a new atom to `anchor`.
    AddAtom {
        anchor: usize,
        atom: AtomType,
        order: BondOrder,
    },
    RemoveAtom { atom: usize },
    /// Set the bond between `a` and `b` to `order`; 0 deletes, creating a
    /// bond between unbonded atoms closes a ring.
    ChangeBond { a: usize, b: usize, order: u8 },
    SubstituteAtom { atom: usize, to: AtomType },
}

impl MutationOp {
    /// Applies the edit and re-validates the result.
    pub fn apply(&self, g: &MolecularGraph, max_atoms: usize) -> Result<MolecularGraph, GraphError> {
        let n = g.atom_count();
        let check = |index: usize| {
            if index < n {
                Ok(())
            } else {
                Err(GraphError::IndexOutOfRange { index, len: n })
            }
        };
        let out = match *self {
            MutationOp::AddAtom { anchor, atom, order } => {
                check(anchor)?;
                let m = n + 1;
                let mut atoms = g.atoms().to_vec();
                atoms.push(atom);
                let mut bonds = vec![0u8; m * m];
                for i in 0..n {
                    for j in 0..n {
                        bonds[i * m + j] = g.bond(i, j);
                    }
                }
                bonds[anchor * m + n] = order.value();
                bonds[n * m + anchor] = order.value();
                MolecularGraph::from_raw(atoms, bonds)
            }
            MutationOp::RemoveAtom { atom } => {
                check(atom)?;
                let keep: Vec<usize> = (0..n).filter(|&v| v != atom).collect();
                let m = keep.len();
                let atoms = keep.iter().map(|&v| g.atom(v)).collect();
                let mut bonds = vec![0u8; m * m];
                for (i, &vi) in keep.iter().enumerate() {
                    for (j, &vj) in keep.iter().enumerate() {
                        bonds[i * m + j] = g.bond(vi, vj);
                    }
                }
                MolecularGraph::from_raw(atoms, bonds)
            }
            MutationOp::ChangeBond { a, b, order } => {
                check(a)?;
                check(b)?;
                if a == b {
                    return Err(GraphError::SelfLoop(a));
                }
                let mut bonds = g.raw_bonds().to_vec();
                bonds[a * n + b] = order;
                bonds[b * n + a] = order;
                MolecularGraph::from_raw(g.atoms().to_vec(), bonds)
            }
            MutationOp::SubstituteAtom { atom, to } => {
                check(atom)?;
                let mut atoms = g.atoms().to_vec();
                atoms[atom] = to;
                MolecularGraph::from_raw(atoms, g.raw_bonds().to_vec())
            }
        };
        out.validate(max_atoms)?;
        Ok(out)
    }
}

/// Every edit of the four kinds that keeps `g` valid under `max_atoms`.
pub fn enumerate_valid_mutations(g: &MolecularGraph, max_atoms: usize) -> Vec<MutationOp> {
    let n = g.atom_count();
    let mut ops = Vec::new();

    if n < max_atoms {
        for anchor in 0..n {
            let free = g.free_valence_unchecked(anchor);
            for atom in AtomType::ALL {
                for order in BondOrder::ALL {
                    if order.value() <= free && order.value() <= atom.max_valence() {
                        ops.push(MutationOp::AddAtom { anchor, atom, order });
                    }
                }
            }
        }
    }

    if n > 1 {
        for atom in 0..n {
            if g.connected_without_vertex(atom) {
                ops.push(MutationOp::RemoveAtom { atom });
            }
        }
    }

    for a in 0..n {
        for b in a + 1..n {
            let current = g.bond(a, b);
            let headroom = g.free_valence_unchecked(a).min(g.free_valence_unchecked(b));
            for order in 0..=3u8 {
                if order == current {
                    continue;
                }
                let ok = if order > current {
                    order - current <= headroom
                } else if order == 0 {
                    g.connected_without_bond(a, b)
                } else {
                    true
                };
                if ok {
                    ops.push(MutationOp::ChangeBond { a, b, order });
                }
            }
        }
    }

    for atom in 0..n {
        let used = g.bond_sum(atom);
        for to in AtomType::ALL {
            if to != g.atom(atom) && used <= to.max_valence() {
                ops.push(MutationOp::SubstituteAtom { atom, to });
            }
        }
    }

    ops
}
