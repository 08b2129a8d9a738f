//! Gaussian-process surrogate and the expected-improvement merit.

mod ei;
mod gp;
pub mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ei::{expected_improvement, normal_cdf, normal_pdf};
pub use gp::{FitReport, GpModel, Hyperparameters, Prediction, StartRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurrogateError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("{inputs} inputs but {targets} targets")]
    LengthMismatch { inputs: usize, targets: usize },
    #[error("kernel matrix is not positive definite even with jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("xi must be non-negative, got {0}")]
    NegativeXi(f64),
    #[error("invalid kernel specification: {0}")]
    InvalidSpec(String),
    #[error("non-finite value in training data")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum KernelFamily {
    Rbf,
    DotProduct,
}

/// A hyperparameter value and its search interval; no bounds means fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameter {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<[f64; 2]>,
}

impl Hyperparameter {
    pub fn fixed(value: f64) -> Self {
        Hyperparameter { value, bounds: None }
    }

    pub fn bounded(value: f64, lo: f64, hi: f64) -> Self {
        Hyperparameter {
            value,
            bounds: Some([lo, hi]),
        }
    }

    fn check(&self, name: &str, allow_zero: bool) -> Result<(), SurrogateError> {
        let bad = |m: String| Err(SurrogateError::InvalidSpec(m));
        if !self.value.is_finite() || self.value < 0.0 || (!allow_zero && self.value == 0.0) {
            return bad(format!("{name} value {} out of range", self.value));
        }
        if let Some([lo, hi]) = self.bounds {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return bad(format!("{name} bounds [{lo}, {hi}] invalid"));
            }
            if self.value < lo || self.value > hi {
                return bad(format!("{name} value {} outside bounds [{lo}, {hi}]", self.value));
            }
        }
        Ok(())
    }
}

/// Kernel family, starting hyperparameters and their search bounds.
///
/// `noise_variance` is relative to the variance of the (centred) training
/// targets; when the targets are constant the scale is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub signal_variance: Hyperparameter,
    /// RBF only.
    pub length_scale: Hyperparameter,
    /// Dot product only.
    pub offset: Hyperparameter,
    pub noise_variance: Hyperparameter,
    pub center_targets: bool,
    /// Local searches per fit: the starting values plus random draws.
    pub restarts: usize,
    pub max_iterations: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            family: KernelFamily::DotProduct,
            signal_variance: Hyperparameter::bounded(1.0, 1e-5, 1e5),
            length_scale: Hyperparameter::bounded(1.0, 1e-5, 1e5),
            offset: Hyperparameter::bounded(1.0, 1e-5, 1e5),
            noise_variance: Hyperparameter::bounded(1e-4, 1e-8, 1e-1),
            center_targets: true,
            restarts: 5,
            max_iterations: 200,
        }
    }
}

impl KernelSpec {
    pub fn rbf() -> Self {
        KernelSpec {
            family: KernelFamily::Rbf,
            ..KernelSpec::default()
        }
    }

    pub fn dot_product() -> Self {
        KernelSpec::default()
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        self.signal_variance.check("signalVariance", false)?;
        self.length_scale.check("lengthScale", false)?;
        self.offset.check("offset", true)?;
        self.noise_variance.check("noiseVariance", true)?;
        if self.restarts == 0 {
            return Err(SurrogateError::InvalidSpec("restarts must be at least 1".into()));
        }
        Ok(())
    }

    /// Kernel at the starting hyperparameter values.
    pub fn kernel(&self) -> Kernel {
        Kernel {
            family: self.family,
            signal_variance: self.signal_variance.value,
            length_scale: self.length_scale.value,
            offset: self.offset.value,
        }
    }
}

/// A concrete covariance function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Kernel {
    pub family: KernelFamily,
    pub signal_variance: f64,
    pub length_scale: f64,
    pub offset: f64,
}

impl Kernel {
    pub fn rbf(signal_variance: f64, length_scale: f64) -> Self {
        Kernel {
            family: KernelFamily::Rbf,
            signal_variance,
            length_scale,
            offset: 0.0,
        }
    }

    pub fn dot_product(signal_variance: f64, offset: f64) -> Self {
        Kernel {
            family: KernelFamily::DotProduct,
            signal_variance,
            length_scale: 1.0,
            offset,
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64, SurrogateError> {
        if x.len() != y.len() {
            return Err(SurrogateError::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        Ok(self.eval_unchecked(x, y))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.family {
            KernelFamily::Rbf => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                self.signal_variance * (-d2 / (2.0 * self.length_scale * self.length_scale)).exp()
            }
            KernelFamily::DotProduct => {
                let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
                self.signal_variance * (self.offset + dot)
            }
        }
    }
}

/// `k(x, x')` for a concrete kernel.
pub fn kernel_eval(kernel: &Kernel, x: &[f64], y: &[f64]) -> Result<f64, SurrogateError> {
    kernel.eval(x, y)
}
