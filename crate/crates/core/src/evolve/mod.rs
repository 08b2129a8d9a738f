//! Evolutionary search over molecular graphs.
//!
//! The same machinery serves as the merit optimizer inside the surrogate
//! loop and as the stand-alone baseline optimizer.

mod ea;
mod mutation;

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::{canonical_key, CanonicalKey, MolecularGraph, Molecule, DEFAULT_HEAVY_ATOM_LIMIT};

pub use ea::{ea_maximize, ea_maximize_stepwise, EaError, EaOutcome, Evaluated, FitnessError};
pub use mutation::{enumerate_valid_mutations, MutationOp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct EaConfig {
    pub steps: usize,
    pub insert_per_step: usize,
    pub max_population: usize,
    /// Upper bound on perturbations per mutation; each mutation draws 1..=this.
    pub max_perturbations: usize,
    pub max_mutation_attempts: usize,
    pub heavy_atom_limit: usize,
}

impl Default for EaConfig {
    fn default() -> Self {
        EaConfig {
            steps: 10,
            insert_per_step: 10,
            max_population: 300,
            max_perturbations: 2,
            max_mutation_attempts: 50,
            heavy_atom_limit: DEFAULT_HEAVY_ATOM_LIMIT,
        }
    }
}

impl EaConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.steps == 0 {
            return Err("ea.steps must be at least 1".into());
        }
        if self.insert_per_step == 0 {
            return Err("ea.insertPerStep must be at least 1".into());
        }
        if self.max_population == 0 {
            return Err("ea.maxPopulation must be at least 1".into());
        }
        if !(1..=2).contains(&self.max_perturbations) {
            return Err("ea.maxPerturbations must be 1 or 2".into());
        }
        if self.max_mutation_attempts == 0 {
            return Err("ea.maxMutationAttempts must be at least 1".into());
        }
        if self.heavy_atom_limit == 0 {
            return Err("heavyAtomLimit must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MutationError {
    #[error("no acceptable mutation after {0} attempts")]
    Exhausted(usize),
}

/// Applies 1 or 2 random valid edits to `parent`, retrying until the result
/// differs from the parent and is not tabu.
pub fn mutate<R: Rng + ?Sized>(
    parent: &MolecularGraph,
    cfg: &EaConfig,
    tabu: &HashSet<CanonicalKey>,
    rng: &mut R,
) -> Result<Molecule, MutationError> {
    let parent_key = canonical_key(parent);
    mutate_filtered(parent, &parent_key, cfg, |k| tabu.contains(k), rng)
}

pub(crate) fn mutate_filtered<R, B>(
    parent: &MolecularGraph,
    parent_key: &CanonicalKey,
    cfg: &EaConfig,
    blocked: B,
    rng: &mut R,
) -> Result<Molecule, MutationError>
where
    R: Rng + ?Sized,
    B: Fn(&CanonicalKey) -> bool,
{
    let limit = cfg.heavy_atom_limit;
    'attempt: for _ in 0..cfg.max_mutation_attempts {
        let perturbations = rng.random_range(1..=cfg.max_perturbations.max(1));
        let mut current = parent.clone();
        for _ in 0..perturbations {
            let ops = enumerate_valid_mutations(&current, limit);
            if ops.is_empty() {
                continue 'attempt;
            }
            let op = ops[rng.random_range(0..ops.len())];
            current = op
                .apply(&current, limit)
                .expect("enumerated mutations are valid");
        }
        let key = canonical_key(&current);
        if &key == parent_key || blocked(&key) {
            continue;
        }
        return Ok(Molecule {
            graph: current,
            key,
        });
    }
    Err(MutationError::Exhausted(cfg.max_mutation_attempts))
}

/// Random walk of `length` unconstrained mutations starting from `start`.
/// Stops early if a mutation cannot be found.
pub fn random_walk<R: Rng + ?Sized>(
    start: &MolecularGraph,
    length: usize,
    cfg: &EaConfig,
    rng: &mut R,
) -> MolecularGraph {
    let mut current = start.clone();
    let mut key = canonical_key(&current);
    for _ in 0..length {
        match mutate_filtered(&current, &key, cfg, |_| false, rng) {
            Ok(next) => {
                current = next.graph;
                key = next.key;
            }
            Err(_) => break,
        }
    }
    current
}
