//! Canonical labelling by colour refinement plus individualisation.
//!
//! Vertices start coloured by (atom type, degree, sorted incident bond
//! orders) and are refined by their neighbours' colours until stable. When a
//! colour class is still shared, every vertex of the first such class is
//! individualised in turn and the search recurses; each discrete leaf gives
//! an ordering whose adjacency certificate is compared lexicographically.
//! The smallest certificate wins, so isomorphic graphs end up with identical
//! relabelled graphs and therefore identical SMILES.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{write_smiles, MolecularGraph};

/// Canonical SMILES text; equal iff the graphs are isomorphic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalKey(String);

impl CanonicalKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn canonical_key(g: &MolecularGraph) -> CanonicalKey {
    let order = canonical_order(g);
    let mut perm = vec![0; order.len()];
    for (position, &v) in order.iter().enumerate() {
        perm[v] = position;
    }
    CanonicalKey(write_smiles(&g.permuted(&perm)))
}

/// `order[i]` is the vertex placed at canonical position `i`.
pub fn canonical_order(g: &MolecularGraph) -> Vec<usize> {
    let mut colors = initial_colors(g);
    let mut best: Option<(Vec<u8>, Vec<usize>)> = None;
    search(g, &mut colors, &mut best);
    best.expect("search visits at least one leaf").1
}

fn initial_colors(g: &MolecularGraph) -> Vec<u32> {
    let n = g.atom_count();
    let invariants: Vec<(u8, usize, Vec<u8>)> = (0..n)
        .map(|v| {
            let mut orders: Vec<u8> = g.neighbors(v).map(|(_, o)| o.value()).collect();
            orders.sort_unstable();
            (g.atom(v).code(), orders.len(), orders)
        })
        .collect();
    rank(&invariants)
}

/// Dense ranks of `items` under their natural order.
fn rank<T: Ord>(items: &[T]) -> Vec<u32> {
    let mut sorted: Vec<&T> = items.iter().collect();
    sorted.sort();
    sorted.dedup();
    items
        .iter()
        .map(|x| sorted.binary_search(&x).unwrap() as u32)
        .collect()
}

fn class_count(colors: &[u32]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

fn refine(g: &MolecularGraph, colors: &mut Vec<u32>) {
    let n = g.atom_count();
    let mut classes = class_count(colors);
    loop {
        let signatures: Vec<(u32, Vec<(u32, u8)>)> = (0..n)
            .map(|v| {
                let mut around: Vec<(u32, u8)> =
                    g.neighbors(v).map(|(u, o)| (colors[u], o.value())).collect();
                around.sort_unstable();
                (colors[v], around)
            })
            .collect();
        let next = rank(&signatures);
        let next_classes = class_count(&next);
        *colors = next;
        if next_classes == classes {
            break;
        }
        classes = next_classes;
    }
}

fn search(g: &MolecularGraph, colors: &mut Vec<u32>, best: &mut Option<(Vec<u8>, Vec<usize>)>) {
    refine(g, colors);
    let n = g.atom_count();
    if class_count(colors) == n {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&v| colors[v]);
        let cert = certificate(g, &order);
        if best.as_ref().is_none_or(|(b, _)| cert < *b) {
            *best = Some((cert, order));
        }
        return;
    }

    let mut counts = vec![0usize; n];
    for &c in colors.iter() {
        counts[c as usize] += 1;
    }
    let target = counts.iter().position(|&k| k > 1).unwrap() as u32;
    for v in 0..n {
        if colors[v] != target {
            continue;
        }
        let mut individualised: Vec<u32> = colors
            .iter()
            .enumerate()
            .map(|(u, &c)| if u == v { 2 * c } else { 2 * c + 1 })
            .collect();
        search(g, &mut individualised, best);
    }
}

fn certificate(g: &MolecularGraph, order: &[usize]) -> Vec<u8> {
    let n = order.len();
    let mut cert = Vec::with_capacity(n + n * (n - 1) / 2);
    cert.extend(order.iter().map(|&v| g.atom(v).code()));
    for i in 0..n {
        for j in i + 1..n {
            cert.push(g.bond(order[i], order[j]));
        }
    }
    cert
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::{parse_smiles, DEFAULT_HEAVY_ATOM_LIMIT};

    fn key(s: &str) -> CanonicalKey {
        canonical_key(&parse_smiles(s, DEFAULT_HEAVY_ATOM_LIMIT).unwrap())
    }

    #[test]
    fn traversal_order_does_not_matter() {
        assert_eq!(key("CCO"), key("OCC"));
        assert_eq!(key("C(O)C"), key("OCC"));
        assert_eq!(key("C1CC1O"), key("OC1CC1"));
    }

    #[test]
    fn bond_orders_distinguish() {
        assert_ne!(key("CC=O"), key("CCO"));
        assert_ne!(key("C=CC"), key("C#CC"));
    }

    #[test]
    fn symmetric_graphs() {
        // neopentane, cyclohexane, cubane-like cage: heavy ties in refinement
        assert_eq!(key("CC(C)(C)C"), key("C(C)(C)(C)C"));
        assert_eq!(key("C1CCCCC1"), key("C1CCCCC1"));
        assert_eq!(key("C12C3C4C1C5C2C3C45"), key("C12C3C4C1C5C2C3C45"));
        // two non-isomorphic 6-rings with the same atom multiset
        assert_ne!(key("C1=CCC=CC1"), key("C1=CC=CCC1"));
    }

    #[test]
    fn key_reparses() {
        for s in ["CCO", "C1CC2CC1C2", "N#CC(=O)F", "C12C3C4C1C5C2C3C45"] {
            let k = key(s);
            assert_eq!(key(k.as_str()), k);
        }
    }
}
