//! Radius-1 shingle counts.
//!
//! A shingle is an atom together with its bonded heavy neighbours. Each
//! distinct shingle gets a column the first time it is seen; a molecule is
//! described by how often each shingle occurs. With radius 1 the number of
//! distinct environments is small, so columns are assigned directly instead
//! of hashed.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::molgraph::{AtomType, BondOrder, MolecularGraph};

pub const DEFAULT_CAPACITY: usize = 2000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ShingleKey {
    pub center: AtomType,
    /// Sorted by bond order, then atom type.
    pub neighbors: Vec<(BondOrder, AtomType)>,
}

impl ShingleKey {
    pub fn new(center: AtomType, mut neighbors: Vec<(BondOrder, AtomType)>) -> Self {
        neighbors.sort_unstable();
        ShingleKey { center, neighbors }
    }
}

/// `C|1:C,1:O`; a bare atom is `C|`.
impl fmt::Display for ShingleKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|", self.center)?;
        for (i, (order, atom)) in self.neighbors.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", order.value(), atom)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed shingle '{0}'")]
pub struct ParseShingleError(pub String);

impl FromStr for ShingleKey {
    type Err = ParseShingleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseShingleError(s.to_string());
        let (center, rest) = s.split_once('|').ok_or_else(err)?;
        let mut chars = center.chars();
        let center = chars.next().and_then(AtomType::from_symbol).ok_or_else(err)?;
        if chars.next().is_some() {
            return Err(err());
        }
        let mut neighbors = Vec::new();
        if !rest.is_empty() {
            for part in rest.split(',') {
                let (order, atom) = part.split_once(':').ok_or_else(err)?;
                let order = order
                    .parse::<u8>()
                    .ok()
                    .and_then(BondOrder::from_value)
                    .ok_or_else(err)?;
                let mut atom_chars = atom.chars();
                let atom = atom_chars.next().and_then(AtomType::from_symbol).ok_or_else(err)?;
                if atom_chars.next().is_some() {
                    return Err(err());
                }
                neighbors.push((order, atom));
            }
        }
        let key = ShingleKey::new(center, neighbors.clone());
        if key.neighbors != neighbors {
            // non-canonical neighbour order would silently alias another entry
            return Err(err());
        }
        Ok(key)
    }
}

impl Serialize for ShingleKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ShingleKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One shingle per atom, in vertex order.
pub fn extract_shingles(g: &MolecularGraph) -> Vec<ShingleKey> {
    (0..g.atom_count())
        .map(|v| {
            ShingleKey::new(
                g.atom(v),
                g.neighbors(v).map(|(u, order)| (order, g.atom(u))).collect(),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShingleError {
    #[error("shingle dictionary is full ({capacity} entries); raise shingleCapacity")]
    CapacityExceeded { capacity: usize },
    #[error("dictionary has {entries} entries but capacity {capacity}")]
    Oversized { entries: usize, capacity: usize },
    #[error("duplicate shingle '{0}' in dictionary")]
    Duplicate(String),
}

/// Fixed-length count vector; entries beyond the dictionary size are zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ShingleVector {
    counts: Vec<u32>,
}

impl ShingleVector {
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().sum()
    }

    /// First `dim` counts as reals.
    pub fn to_features(&self, dim: usize) -> Vec<f64> {
        self.counts[..dim].iter().map(|&c| f64::from(c)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    pub vector: ShingleVector,
    /// Shingles dropped because a frozen dictionary did not know them.
    pub unseen: u32,
}

/// Shingle → column map in first-seen order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShingleDictionary {
    index: HashMap<ShingleKey, usize>,
    keys: Vec<ShingleKey>,
    capacity: usize,
}

impl Default for ShingleDictionary {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl ShingleDictionary {
    pub fn new(capacity: usize) -> Self {
        ShingleDictionary {
            index: HashMap::new(),
            keys: Vec::new(),
            capacity,
        }
    }

    /// Rebuilds a dictionary from its ordered entries.
    pub fn from_keys(keys: Vec<ShingleKey>, capacity: usize) -> Result<Self, ShingleError> {
        if keys.len() > capacity {
            return Err(ShingleError::Oversized {
                entries: keys.len(),
                capacity,
            });
        }
        let mut index = HashMap::with_capacity(keys.len());
        for (i, k) in keys.iter().enumerate() {
            if index.insert(k.clone(), i).is_some() {
                return Err(ShingleError::Duplicate(k.to_string()));
            }
        }
        Ok(ShingleDictionary {
            index,
            keys,
            capacity,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[ShingleKey] {
        &self.keys
    }

    pub fn get(&self, key: &ShingleKey) -> Option<usize> {
        self.index.get(key).copied()
    }

    /// Counts shingles, adding unknown ones to the dictionary (in key order
    /// within one molecule).
    ///
    /// On capacity overflow nothing is added.
    pub fn encode(&mut self, g: &MolecularGraph) -> Result<ShingleVector, ShingleError> {
        let shingles = extract_shingles(g);
        let mut fresh: Vec<&ShingleKey> = Vec::new();
        for s in &shingles {
            if !self.index.contains_key(s) && !fresh.contains(&s) {
                fresh.push(s);
            }
        }
        // Sorted so the column order does not depend on atom numbering.
        fresh.sort();
        if self.keys.len() + fresh.len() > self.capacity {
            return Err(ShingleError::CapacityExceeded {
                capacity: self.capacity,
            });
        }
        for s in fresh {
            self.index.insert(s.clone(), self.keys.len());
            self.keys.push(s.clone());
        }
        Ok(self.encode_frozen(g).vector)
    }

    /// Counts shingles without touching the dictionary; unknown ones are
    /// dropped and tallied.
    pub fn encode_frozen(&self, g: &MolecularGraph) -> Encoding {
        let mut counts = vec![0u32; self.capacity];
        let mut unseen = 0;
        for s in extract_shingles(g) {
            match self.index.get(&s) {
                Some(&i) => counts[i] += 1,
                None => unseen += 1,
            }
        }
        Encoding {
            vector: ShingleVector { counts },
            unseen,
        }
    }

    /// Dictionary-column counts only (length = current dictionary size).
    pub fn features_frozen(&self, g: &MolecularGraph) -> (Vec<f64>, u32) {
        let mut counts = vec![0.0; self.keys.len()];
        let mut unseen = 0;
        for s in extract_shingles(g) {
            match self.index.get(&s) {
                Some(&i) => counts[i] += 1.0,
                None => unseen += 1,
            }
        }
        (counts, unseen)
    }
}
