//! The outer optimization loop: fit a surrogate on everything evaluated so
//! far, let several EA restarts maximize expected improvement under it, and
//! spend exact evaluations only on the restarts' best proposals.

mod baseline;
mod run;

use std::cell::Cell;
use std::collections::HashSet;
use std::io;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolve::EaConfig;
use crate::molgraph::{CanonicalKey, Molecule};
use crate::objective::ObjectiveError;
use crate::shingles::{ShingleDictionary, ShingleVector, DEFAULT_CAPACITY};
use crate::surrogate::{expected_improvement, GpModel, KernelSpec, Prediction, SurrogateError};

pub use baseline::run_ea_baseline;
pub use run::{BboRun, BboState, RunOptions, StepReport, StoredRecord};

#[derive(Debug, Error)]
pub enum BboError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Objective(ObjectiveError),
    #[error("surrogate failure: {0}")]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("inconsistent run state: {0}")]
    State(String),
}

fn default_seed_molecules() -> Vec<String> {
    vec!["C".to_string()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct BboConfig {
    /// EA restarts per step, and so the most exact evaluations per step.
    pub restarts: usize,
    pub init_pop_size: usize,
    pub ea: EaConfig,
    pub xi: f64,
    /// Exact objective calls, initial molecules and failures included.
    pub budget: u64,
    pub kernel: KernelSpec,
    pub master_seed: u64,
    #[serde(default = "default_seed_molecules")]
    pub seed_molecules: Vec<String>,
    pub shingle_capacity: usize,
}

impl Default for BboConfig {
    fn default() -> Self {
        BboConfig {
            restarts: 10,
            init_pop_size: 10,
            ea: EaConfig::default(),
            xi: 0.01,
            budget: 1000,
            kernel: KernelSpec::dot_product(),
            master_seed: 0,
            seed_molecules: default_seed_molecules(),
            shingle_capacity: DEFAULT_CAPACITY,
        }
    }
}

impl BboConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.restarts == 0 {
            return Err("restarts must be at least 1".into());
        }
        if self.init_pop_size == 0 {
            return Err("initPopSize must be at least 1".into());
        }
        if self.budget == 0 {
            return Err("budget must be at least 1".into());
        }
        if !(self.xi >= 0.0 && self.xi.is_finite()) {
            return Err("xi must be non-negative".into());
        }
        if self.shingle_capacity == 0 {
            return Err("shingleCapacity must be at least 1".into());
        }
        self.ea.validate()?;
        self.kernel.validate().map_err(|e| e.to_string())?;
        self.parse_seed_molecules().map(|_| ())
    }

    /// Initial molecules in configured order, duplicates removed.
    pub fn parse_seed_molecules(&self) -> Result<Vec<Molecule>, String> {
        if self.seed_molecules.is_empty() {
            return Err("seedMolecules must not be empty".into());
        }
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for s in &self.seed_molecules {
            let m = Molecule::parse(s, self.ea.heavy_atom_limit)
                .map_err(|e| format!("seed molecule {s:?}: {e}"))?;
            if seen.insert(m.key.clone()) {
                out.push(m);
            }
        }
        Ok(out)
    }
}

/// A member of the training set: an exactly evaluated molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluatedMolecule {
    pub molecule: Molecule,
    pub descriptor: ShingleVector,
    pub value: f64,
    pub step: u64,
    pub restart: u64,
    pub call_index: u64,
    pub wall_time_s: f64,
}

impl EvaluatedMolecule {
    pub fn key(&self) -> &CanonicalKey {
        &self.molecule.key
    }

    pub fn smiles(&self) -> &str {
        self.molecule.smiles()
    }
}

/// Samples `min(size, |d|)` distinct molecules without replacement. The
/// molecule ranked i-th from the worst has weight proportional to i, which
/// works for objectives of any sign.
pub fn select_initial_population<R: Rng + ?Sized>(
    d: &[EvaluatedMolecule],
    size: usize,
    rng: &mut R,
) -> Vec<Molecule> {
    if size >= d.len() {
        return d.iter().map(|e| e.molecule.clone()).collect();
    }
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[a].value.total_cmp(&d[b].value).then(a.cmp(&b)));
    let picked = rand::seq::index::sample_weighted(rng, order.len(), |i| (i + 1) as f64, size)
        .expect("positive finite weights");
    picked
        .into_iter()
        .map(|i| d[order[i]].molecule.clone())
        .collect()
}

/// Anything that maps a feature vector to a predictive distribution.
pub trait Predictor: Sync {
    fn predict(&self, x: &[f64]) -> Result<Prediction, SurrogateError>;
}

impl Predictor for GpModel {
    fn predict(&self, x: &[f64]) -> Result<Prediction, SurrogateError> {
        GpModel::predict(self, x)
    }
}

/// Expected improvement of a molecule under the surrogate, with molecules
/// already known scoring exactly zero and never reaching the surrogate.
pub struct EiFitness<'a, P: ?Sized> {
    surrogate: &'a P,
    dictionary: &'a ShingleDictionary,
    known: &'a HashSet<CanonicalKey>,
    f_max: f64,
    xi: f64,
    calls: Cell<u64>,
}

pub fn ei_fitness<'a, P: Predictor + ?Sized>(
    surrogate: &'a P,
    dictionary: &'a ShingleDictionary,
    known: &'a HashSet<CanonicalKey>,
    f_max: f64,
    xi: f64,
) -> EiFitness<'a, P> {
    EiFitness {
        surrogate,
        dictionary,
        known,
        f_max,
        xi,
        calls: Cell::new(0),
    }
}

impl<P: Predictor + ?Sized> EiFitness<'_, P> {
    pub fn score(&self, m: &Molecule) -> f64 {
        if self.known.contains(&m.key) {
            return 0.0;
        }
        self.calls.set(self.calls.get() + 1);
        let (x, _) = self.dictionary.features_frozen(&m.graph);
        self.surrogate
            .predict(&x)
            .and_then(|p| expected_improvement(p, self.f_max, self.xi))
            .unwrap_or(0.0)
    }

    /// Surrogate predictions made so far.
    pub fn surrogate_calls(&self) -> u64 {
        self.calls.get()
    }
}

const STREAM_FIT: u64 = 0;
const STREAM_RESTART: u64 = 1;
const STREAM_BASELINE: u64 = 2;

/// Independent generator for one (step, restart, purpose) cell of a run.
pub(crate) fn stream(master: u64, step: u64, restart: u64, purpose: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    for (chunk, v) in seed.chunks_mut(8).zip([master, step, restart, purpose]) {
        chunk.copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}
