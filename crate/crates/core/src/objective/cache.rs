use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use super::{Objective, ObjectiveError};
use crate::molgraph::{canonical_key, CanonicalKey, MolecularGraph, Molecule};

/// Memoizes an objective by canonical key and counts exact calls.
///
/// Two threads asking for the same uncached key at once may both evaluate it.
pub struct CachedObjective<O> {
    inner: O,
    cache: Mutex<HashMap<CanonicalKey, f64>>,
    calls: AtomicU64,
}

pub fn cached<O: Objective>(inner: O) -> CachedObjective<O> {
    CachedObjective {
        inner,
        cache: Mutex::new(HashMap::new()),
        calls: AtomicU64::new(0),
    }
}

impl<O: Objective> CachedObjective<O> {
    /// Value and whether this call reached the underlying objective.
    pub fn evaluate_molecule(&self, m: &Molecule) -> Result<(f64, bool), ObjectiveError> {
        if let Some(v) = self.lookup(&m.key) {
            return Ok((v, false));
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let v = self.inner.evaluate(&m.graph)?;
        self.cache.lock().unwrap().insert(m.key.clone(), v);
        Ok((v, true))
    }

    pub fn lookup(&self, key: &CanonicalKey) -> Option<f64> {
        self.cache.lock().unwrap().get(key).copied()
    }

    /// Seeds the cache without counting a call.
    pub fn insert(&self, key: CanonicalKey, value: f64) {
        self.cache.lock().unwrap().insert(key, value);
    }

    /// Calls that reached the underlying objective, failures included.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: Objective> Objective for CachedObjective<O> {
    fn evaluate(&self, g: &MolecularGraph) -> Result<f64, ObjectiveError> {
        let m = Molecule {
            key: canonical_key(g),
            graph: g.clone(),
        };
        self.evaluate_molecule(&m).map(|(v, _)| v)
    }
}
