//! Heavy-atom molecular graphs over the C/N/O/F chemistry.
//!
//! Hydrogens are implicit: whatever valence an atom does not spend on bonds
//! to other heavy atoms is filled with hydrogens. A [`MolecularGraph`] is
//! always valid once constructed; every constructor and every mutation
//! re-checks valence caps, connectivity and the heavy-atom limit.

mod canon;
mod smiles;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use canon::{canonical_key, canonical_order, CanonicalKey};
pub use smiles::{parse_smiles, write_smiles, SmilesError};

/// Heavy-atom cap used when nothing else is configured.
pub const DEFAULT_HEAVY_ATOM_LIMIT: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AtomType {
    C,
    N,
    O,
    F,
}

impl AtomType {
    pub const ALL: [AtomType; 4] = [AtomType::C, AtomType::N, AtomType::O, AtomType::F];

    pub fn max_valence(self) -> u8 {
        match self {
            AtomType::C => 4,
            AtomType::N => 3,
            AtomType::O => 2,
            AtomType::F => 1,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            AtomType::C => 'C',
            AtomType::N => 'N',
            AtomType::O => 'O',
            AtomType::F => 'F',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'C' => Some(AtomType::C),
            'N' => Some(AtomType::N),
            'O' => Some(AtomType::O),
            'F' => Some(AtomType::F),
            _ => None,
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for AtomType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BondOrder {
    Single = 1,
    Double = 2,
    Triple = 3,
}

impl BondOrder {
    pub const ALL: [BondOrder; 3] = [BondOrder::Single, BondOrder::Double, BondOrder::Triple];

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(v: u8) -> Option<Self> {
        match v {
            1 => Some(BondOrder::Single),
            2 => Some(BondOrder::Double),
            3 => Some(BondOrder::Triple),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("a molecule needs at least one heavy atom")]
    Empty,
    #[error("{count} heavy atoms exceeds the limit of {limit}")]
    TooManyAtoms { count: usize, limit: usize },
    #[error("atom {atom} ({element}) uses valence {used}, maximum is {max}")]
    ValenceExceeded {
        atom: usize,
        element: AtomType,
        used: u8,
        max: u8,
    },
    #[error("molecule is not connected")]
    Disconnected,
    #[error("atom {0} is bonded to itself")]
    SelfLoop(usize),
    #[error("atoms {0} and {1} are bonded twice")]
    ParallelBond(usize, usize),
    #[error("atom index {index} out of range for {len} atoms")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Connected, valence-valid heavy-atom graph.
///
/// Bonds live in a dense `n × n` order matrix (0 = no bond); molecules are
/// capped at a handful of atoms so the matrix stays tiny.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct MolecularGraph {
    atoms: Vec<AtomType>,
    bonds: Vec<u8>,
}

impl MolecularGraph {
    /// Builds and validates a graph from atoms and `(i, j, order)` bonds.
    pub fn new(
        atoms: Vec<AtomType>,
        edges: &[(usize, usize, BondOrder)],
        max_atoms: usize,
    ) -> Result<Self, GraphError> {
        let n = atoms.len();
        let mut bonds = vec![0u8; n * n];
        for &(i, j, order) in edges {
            for index in [i, j] {
                if index >= n {
                    return Err(GraphError::IndexOutOfRange { index, len: n });
                }
            }
            if i == j {
                return Err(GraphError::SelfLoop(i));
            }
            if bonds[i * n + j] != 0 {
                return Err(GraphError::ParallelBond(i.min(j), i.max(j)));
            }
            bonds[i * n + j] = order.value();
            bonds[j * n + i] = order.value();
        }
        let graph = MolecularGraph { atoms, bonds };
        graph.validate(max_atoms)?;
        Ok(graph)
    }

    /// A lone heavy atom (methane for carbon).
    pub fn single_atom(atom: AtomType) -> Self {
        MolecularGraph {
            atoms: vec![atom],
            bonds: vec![0],
        }
    }

    /// Builds without validation; callers must validate before exposing.
    pub(crate) fn from_raw(atoms: Vec<AtomType>, bonds: Vec<u8>) -> Self {
        debug_assert_eq!(atoms.len() * atoms.len(), bonds.len());
        MolecularGraph { atoms, bonds }
    }

    /// Exhaustive validity check: non-empty, atom cap, symmetric bond
    /// matrix without self loops, valence caps and connectivity.
    pub fn validate(&self, max_atoms: usize) -> Result<(), GraphError> {
        let n = self.atoms.len();
        if n == 0 {
            return Err(GraphError::Empty);
        }
        if n > max_atoms {
            return Err(GraphError::TooManyAtoms {
                count: n,
                limit: max_atoms,
            });
        }
        for i in 0..n {
            if self.bonds[i * n + i] != 0 {
                return Err(GraphError::SelfLoop(i));
            }
            let used = self.bond_sum(i);
            let max = self.atoms[i].max_valence();
            if used > max {
                return Err(GraphError::ValenceExceeded {
                    atom: i,
                    element: self.atoms[i],
                    used,
                    max,
                });
            }
            debug_assert!((0..n).all(|j| self.bonds[i * n + j] == self.bonds[j * n + i]));
        }
        if !self.is_connected() {
            return Err(GraphError::Disconnected);
        }
        Ok(())
    }

    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[AtomType] {
        &self.atoms
    }

    pub fn atom(&self, v: usize) -> AtomType {
        self.atoms[v]
    }

    /// Bond order between `i` and `j`, 0 when unbonded.
    pub fn bond(&self, i: usize, j: usize) -> u8 {
        self.bonds[i * self.atoms.len() + j]
    }

    pub fn bond_order(&self, i: usize, j: usize) -> Option<BondOrder> {
        BondOrder::from_value(self.bond(i, j))
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, BondOrder)> + '_ {
        let n = self.atoms.len();
        self.bonds[v * n..(v + 1) * n]
            .iter()
            .enumerate()
            .filter_map(|(u, &b)| BondOrder::from_value(b).map(|o| (u, o)))
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors(v).count()
    }

    /// All bonds as `(i, j, order)` with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize, BondOrder)> {
        let n = self.atoms.len();
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if let Some(order) = self.bond_order(i, j) {
                    out.push((i, j, order));
                }
            }
        }
        out
    }

    pub fn bond_count(&self) -> usize {
        self.bonds.iter().filter(|&&b| b != 0).count() / 2
    }

    pub(crate) fn bond_sum(&self, v: usize) -> u8 {
        let n = self.atoms.len();
        self.bonds[v * n..(v + 1) * n].iter().sum()
    }

    /// Unused valence at `v`, i.e. its implicit hydrogen count.
    pub fn free_valence(&self, v: usize) -> Result<u8, GraphError> {
        if v >= self.atoms.len() {
            return Err(GraphError::IndexOutOfRange {
                index: v,
                len: self.atoms.len(),
            });
        }
        Ok(self.atoms[v].max_valence() - self.bond_sum(v))
    }

    pub(crate) fn free_valence_unchecked(&self, v: usize) -> u8 {
        self.atoms[v].max_valence() - self.bond_sum(v)
    }

    pub fn is_connected(&self) -> bool {
        connected_without(&self.atoms, &self.bonds, None, None)
    }

    /// Connectivity after deleting vertex `v` (ignoring it entirely).
    pub(crate) fn connected_without_vertex(&self, v: usize) -> bool {
        connected_without(&self.atoms, &self.bonds, Some(v), None)
    }

    /// Connectivity after deleting the bond `(i, j)`.
    pub(crate) fn connected_without_bond(&self, i: usize, j: usize) -> bool {
        connected_without(&self.atoms, &self.bonds, None, Some((i, j)))
    }

    /// Returns a copy with vertex `i` of `self` placed at position `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.atoms.len();
        assert_eq!(perm.len(), n);
        let mut atoms = vec![AtomType::C; n];
        let mut bonds = vec![0u8; n * n];
        for i in 0..n {
            atoms[perm[i]] = self.atoms[i];
            for j in 0..n {
                bonds[perm[i] * n + perm[j]] = self.bonds[i * n + j];
            }
        }
        MolecularGraph { atoms, bonds }
    }

    pub(crate) fn raw_bonds(&self) -> &[u8] {
        &self.bonds
    }
}

fn connected_without(
    atoms: &[AtomType],
    bonds: &[u8],
    skip_vertex: Option<usize>,
    skip_bond: Option<(usize, usize)>,
) -> bool {
    let n = atoms.len();
    let live = n - usize::from(skip_vertex.is_some());
    if live == 0 {
        return false;
    }
    let Some(start) = (0..n).find(|&v| Some(v) != skip_vertex) else {
        return false;
    };
    let mut seen = vec![false; n];
    let mut stack = vec![start];
    seen[start] = true;
    let mut reached = 1;
    while let Some(v) = stack.pop() {
        for u in 0..n {
            if seen[u] || Some(u) == skip_vertex || bonds[v * n + u] == 0 {
                continue;
            }
            if let Some((a, b)) = skip_bond {
                if (v == a && u == b) || (v == b && u == a) {
                    continue;
                }
            }
            seen[u] = true;
            reached += 1;
            stack.push(u);
        }
    }
    reached == live
}

impl fmt::Debug for MolecularGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MolecularGraph({})", write_smiles(self))
    }
}

impl fmt::Display for MolecularGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&write_smiles(self))
    }
}

/// A graph paired with its canonical key, computed once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Molecule {
    pub graph: MolecularGraph,
    pub key: CanonicalKey,
}

impl Molecule {
    pub fn new(graph: MolecularGraph) -> Self {
        let key = canonical_key(&graph);
        Molecule { graph, key }
    }

    pub fn parse(text: &str, max_atoms: usize) -> Result<Self, SmilesError> {
        parse_smiles(text, max_atoms).map(Molecule::new)
    }

    pub fn smiles(&self) -> &str {
        self.key.as_str()
    }
}
