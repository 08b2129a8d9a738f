//! Reader and writer for the bare-atom SMILES subset.
//!
//! Supported: uppercase `C N O F` without brackets, bonds `- = #`, branches
//! and ring closures `0`-`9` (plus `%nn` for two-digit labels). Anything
//! else is a syntax error.

use thiserror::Error;

use super::{AtomType, BondOrder, GraphError, MolecularGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error(transparent)]
    Chemistry(#[from] GraphError),
}

fn syntax(position: usize, message: impl Into<String>) -> SmilesError {
    SmilesError::Syntax {
        position,
        message: message.into(),
    }
}

struct OpenRing {
    atom: usize,
    bond: Option<BondOrder>,
    position: usize,
}

/// Parses `text` into a validated graph with at most `max_atoms` heavy atoms.
pub fn parse_smiles(text: &str, max_atoms: usize) -> Result<MolecularGraph, SmilesError> {
    let chars: Vec<char> = text.chars().collect();
    let mut atoms: Vec<AtomType> = Vec::new();
    let mut edges: Vec<(usize, usize, BondOrder)> = Vec::new();
    let mut prev: Option<usize> = None;
    let mut pending: Option<(BondOrder, usize)> = None;
    // (atom before the branch, atoms added since the branch opened)
    let mut branches: Vec<(usize, usize, usize)> = Vec::new();
    let mut rings: Vec<Option<OpenRing>> = (0..100).map(|_| None).collect();

    let add_edge = |edges: &mut Vec<(usize, usize, BondOrder)>,
                        a: usize,
                        b: usize,
                        order: BondOrder,
                        pos: usize|
     -> Result<(), SmilesError> {
        if a == b {
            return Err(syntax(pos, "ring closure on the same atom"));
        }
        if edges
            .iter()
            .any(|&(x, y, _)| (x == a && y == b) || (x == b && y == a))
        {
            return Err(GraphError::ParallelBond(a.min(b), a.max(b)).into());
        }
        edges.push((a, b, order));
        Ok(())
    };

    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if let Some(atom) = AtomType::from_symbol(c) {
            let index = atoms.len();
            atoms.push(atom);
            match (prev, pending.take()) {
                (Some(p), bond) => {
                    add_edge(&mut edges, p, index, bond.map_or(BondOrder::Single, |b| b.0), i)?
                }
                (None, Some((_, pos))) => return Err(syntax(pos, "bond without a preceding atom")),
                (None, None) => {}
            }
            if let Some(top) = branches.last_mut() {
                top.1 += 1;
            }
            prev = Some(index);
            i += 1;
            continue;
        }
        match c {
            '-' | '=' | '#' => {
                if prev.is_none() {
                    return Err(syntax(i, "bond without a preceding atom"));
                }
                if pending.is_some() {
                    return Err(syntax(i, "two consecutive bond symbols"));
                }
                let order = match c {
                    '-' => BondOrder::Single,
                    '=' => BondOrder::Double,
                    _ => BondOrder::Triple,
                };
                pending = Some((order, i));
                i += 1;
            }
            '(' => {
                let Some(p) = prev else {
                    return Err(syntax(i, "branch without a preceding atom"));
                };
                if let Some((_, pos)) = pending {
                    return Err(syntax(pos, "bond symbol before a branch"));
                }
                branches.push((p, 0, i));
                i += 1;
            }
            ')' => {
                let Some((anchor, added, _)) = branches.pop() else {
                    return Err(syntax(i, "unbalanced ')'"));
                };
                if let Some((_, pos)) = pending {
                    return Err(syntax(pos, "dangling bond at end of branch"));
                }
                if added == 0 {
                    return Err(syntax(i, "empty branch"));
                }
                prev = Some(anchor);
                i += 1;
            }
            '0'..='9' | '%' => {
                let start = i;
                let label = if c == '%' {
                    let digits: String = chars.iter().skip(i + 1).take(2).collect();
                    if digits.len() != 2 || !digits.chars().all(|d| d.is_ascii_digit()) {
                        return Err(syntax(i, "'%' must be followed by two digits"));
                    }
                    i += 3;
                    digits.parse::<usize>().unwrap()
                } else {
                    i += 1;
                    c.to_digit(10).unwrap() as usize
                };
                let Some(p) = prev else {
                    return Err(syntax(start, "ring closure without a preceding atom"));
                };
                let bond = pending.take().map(|b| b.0);
                match rings[label].take() {
                    Some(open) => {
                        let order = match (open.bond, bond) {
                            (Some(a), Some(b)) if a != b => {
                                return Err(syntax(start, "ring closure bond orders disagree"))
                            }
                            (Some(a), _) | (None, Some(a)) => a,
                            (None, None) => BondOrder::Single,
                        };
                        add_edge(&mut edges, open.atom, p, order, start)?;
                    }
                    None => {
                        rings[label] = Some(OpenRing {
                            atom: p,
                            bond,
                            position: start,
                        })
                    }
                }
            }
            '.' => {
                if let Some((_, pos)) = pending {
                    return Err(syntax(pos, "dangling bond before '.'"));
                }
                if !branches.is_empty() {
                    return Err(syntax(i, "'.' inside a branch"));
                }
                prev = None;
                i += 1;
            }
            other => return Err(syntax(i, format!("unsupported token '{other}'"))),
        }
    }

    if let Some((_, pos)) = pending {
        return Err(syntax(pos, "dangling bond at end of input"));
    }
    if let Some(&(_, _, pos)) = branches.last() {
        return Err(syntax(pos, "unbalanced '('"));
    }
    if let Some(open) = rings.iter().flatten().next() {
        return Err(syntax(open.position, "unclosed ring closure"));
    }
    Ok(MolecularGraph::new(atoms, &edges, max_atoms)?)
}

/// Writes `g` in its own vertex order: depth-first from vertex 0, neighbours
/// in index order, non-tree bonds as ring closures.
pub fn write_smiles(g: &MolecularGraph) -> String {
    let n = g.atom_count();
    let mut visited = vec![false; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    // ring bonds per atom: (partner, is_opening)
    let mut ring_bonds: Vec<Vec<(usize, bool)>> = vec![Vec::new(); n];
    let mut preorder = Vec::with_capacity(n);
    dfs(g, 0, None, &mut visited, &mut children, &mut ring_bonds, &mut preorder);

    let mut rank = vec![0usize; n];
    for (r, &v) in preorder.iter().enumerate() {
        rank[v] = r;
    }
    for bonds in &mut ring_bonds {
        bonds.sort_by_key(|&(partner, _)| rank[partner]);
    }

    let mut out = String::with_capacity(2 * n);
    let mut digits: Vec<Option<(usize, usize)>> = vec![None; 100];
    emit(g, 0, None, &children, &ring_bonds, &mut digits, &mut out);
    out
}

fn dfs(
    g: &MolecularGraph,
    v: usize,
    parent: Option<usize>,
    visited: &mut [bool],
    children: &mut [Vec<usize>],
    ring_bonds: &mut [Vec<(usize, bool)>],
    preorder: &mut Vec<usize>,
) {
    visited[v] = true;
    preorder.push(v);
    let neighbors: Vec<usize> = g.neighbors(v).map(|(u, _)| u).collect();
    for u in neighbors {
        if Some(u) == parent {
            continue;
        }
        if visited[u] {
            // Back edge to an ancestor, unless the descendant already recorded it.
            if !ring_bonds[u].iter().any(|&(p, _)| p == v) {
                ring_bonds[u].push((v, true));
                ring_bonds[v].push((u, false));
            }
            continue;
        }
        children[v].push(u);
        dfs(g, u, Some(v), visited, children, ring_bonds, preorder);
    }
}

fn bond_symbol(order: u8) -> &'static str {
    match order {
        2 => "=",
        3 => "#",
        _ => "",
    }
}

fn emit(
    g: &MolecularGraph,
    v: usize,
    parent: Option<usize>,
    children: &[Vec<usize>],
    ring_bonds: &[Vec<(usize, bool)>],
    digits: &mut [Option<(usize, usize)>],
    out: &mut String,
) {
    if let Some(p) = parent {
        out.push_str(bond_symbol(g.bond(p, v)));
    }
    out.push(g.atom(v).symbol());

    // Close first, then open, so a label freed here is not reused at the same atom.
    let mut freed = Vec::new();
    for &(partner, opening) in &ring_bonds[v] {
        if opening {
            continue;
        }
        let label = digits
            .iter()
            .position(|d| *d == Some((partner, v)))
            .expect("ring closure was opened at an ancestor");
        out.push_str(bond_symbol(g.bond(partner, v)));
        push_label(out, label);
        freed.push(label);
    }
    for &(partner, opening) in &ring_bonds[v] {
        if !opening {
            continue;
        }
        let label = (1..digits.len())
            .chain(std::iter::once(0))
            .find(|&l| digits[l].is_none() && !freed.contains(&l))
            .expect("fewer than 100 simultaneously open rings");
        digits[label] = Some((v, partner));
        push_label(out, label);
    }
    for label in freed {
        digits[label] = None;
    }

    let kids = &children[v];
    for (k, &child) in kids.iter().enumerate() {
        let last = k + 1 == kids.len();
        if !last {
            out.push('(');
        }
        emit(g, child, Some(v), children, ring_bonds, digits, out);
        if !last {
            out.push(')');
        }
    }
}

fn push_label(out: &mut String, label: usize) {
    if label < 10 {
        out.push(char::from(b'0' + label as u8));
    } else {
        out.push('%');
        out.push_str(&format!("{label:02}"));
    }
}
