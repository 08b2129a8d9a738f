//! Exact objectives: the expensive function the optimizer is trying to
//! spend as few calls on as possible.

mod cache;
mod external;
mod synthetic;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::MolecularGraph;

pub use cache::{cached, CachedObjective};
pub use external::ExternalProcess;
pub use synthetic::{shingle_weight, AtomCount, LinearShingles, LINEAR_OFFSET, LINEAR_SCALE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObjectiveError {
    #[error("evaluator timed out after {0:?}")]
    Timeout(Duration),
    #[error("malformed evaluator reply: {0:?}")]
    Malformed(String),
    #[error("evaluator reported an error: {0}")]
    Failed(String),
    #[error("evaluator exited during a request")]
    Crashed,
    #[error("evaluator unavailable: {0}")]
    Unavailable(String),
}

impl ObjectiveError {
    /// Errors after which no further evaluation can succeed.
    pub fn is_fatal(&self) -> bool {
        matches!(self, ObjectiveError::Unavailable(_))
    }
}

pub trait Objective: Send + Sync {
    fn evaluate(&self, g: &MolecularGraph) -> Result<f64, ObjectiveError>;
}

impl<T: Objective + ?Sized> Objective for Box<T> {
    fn evaluate(&self, g: &MolecularGraph) -> Result<f64, ObjectiveError> {
        (**self).evaluate(g)
    }
}

impl<T: Objective + ?Sized> Objective for &T {
    fn evaluate(&self, g: &MolecularGraph) -> Result<f64, ObjectiveError> {
        (**self).evaluate(g)
    }
}

fn default_timeout() -> f64 {
    600.0
}

fn default_pool() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", rename_all_fields = "camelCase", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// Seeded random weight per shingle, summed over the molecule's shingles
    /// and mapped affinely into [-10, -1].
    SyntheticLinearShingles {
        seed: u64,
        #[serde(default)]
        noise_std: f64,
    },
    /// Heavy-atom count.
    SyntheticAtomCount {
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        noise_std: f64,
    },
    /// A child process speaking the line protocol on stdin/stdout.
    ExternalProcess {
        command: Vec<String>,
        #[serde(default = "default_timeout")]
        timeout_s: f64,
        #[serde(default = "default_pool")]
        pool_size: usize,
        #[serde(default)]
        noise_std: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl ObjectiveSpec {
    pub fn validate(&self) -> Result<(), String> {
        let noise = match self {
            ObjectiveSpec::SyntheticLinearShingles { noise_std, .. }
            | ObjectiveSpec::SyntheticAtomCount { noise_std, .. } => *noise_std,
            ObjectiveSpec::ExternalProcess {
                command,
                timeout_s,
                pool_size,
                noise_std,
                ..
            } => {
                if command.is_empty() {
                    return Err("objective.command must not be empty".into());
                }
                if !(*timeout_s > 0.0 && timeout_s.is_finite()) {
                    return Err("objective.timeoutS must be positive".into());
                }
                if *pool_size == 0 {
                    return Err("objective.poolSize must be at least 1".into());
                }
                *noise_std
            }
        };
        if !(noise >= 0.0 && noise.is_finite()) {
            return Err("objective.noiseStd must be non-negative".into());
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Box<dyn Objective>, ObjectiveError> {
        self.validate().map_err(ObjectiveError::Unavailable)?;
        Ok(match self {
            ObjectiveSpec::SyntheticLinearShingles { seed, noise_std } => {
                Box::new(LinearShingles::new(*seed).with_noise(*noise_std))
            }
            ObjectiveSpec::SyntheticAtomCount { seed, noise_std } => {
                Box::new(synthetic::Noisy::new(AtomCount, *seed, *noise_std))
            }
            ObjectiveSpec::ExternalProcess {
                command,
                timeout_s,
                pool_size,
                noise_std,
                seed,
            } => {
                let process = ExternalProcess::new(
                    command.clone(),
                    Duration::from_secs_f64(*timeout_s),
                    *pool_size,
                );
                Box::new(synthetic::Noisy::new(process, *seed, *noise_std))
            }
        })
    }
}
