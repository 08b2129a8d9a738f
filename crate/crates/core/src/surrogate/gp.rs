//! Exact GP regression with multi-start likelihood maximization.
//!
//! Two likelihood evaluators exist. The dense one factorizes the `n × n`
//! covariance for every trial. For the dot-product kernel the covariance is
//! `σs²·(XXᵀ + σ0²·11ᵀ) + σn²·I`, so after one eigendecomposition of the
//! `d × d` Gram matrix `XᵀX` every trial costs O(d) via Woodbury and the
//! matrix determinant lemma.
//!
//! The fitted posterior is kept either as the Cholesky factor of `K_n`
//! (dense) or, for the dot-product kernel with more points than features, as
//! the Cholesky factor of the `(d+1) × (d+1)` weight-space precision. Both
//! give the same mean and variance.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::simplex::minimize_bounded;
use super::{Kernel, KernelFamily, KernelSpec, SurrogateError};

/// Fitted hyperparameters in absolute units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Hyperparameters {
    pub signal_variance: f64,
    pub length_scale: f64,
    pub offset: f64,
    pub noise_variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StartRecord {
    pub initial: Hyperparameters,
    pub initial_lml: f64,
    pub fitted: Hyperparameters,
    pub fitted_lml: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FitReport {
    pub starts: Vec<StartRecord>,
    pub lml: f64,
    /// Variance the relative noise bounds were scaled by.
    pub target_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone)]
enum Posterior {
    Dense {
        factor: Cholesky<f64, Dyn>,
        alpha: DVector<f64>,
    },
    Weight {
        factor: Cholesky<f64, Dyn>,
        weights: DVector<f64>,
    },
}

#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: Kernel,
    noise_variance: f64,
    inputs: Vec<Vec<f64>>,
    target_mean: f64,
    posterior: Posterior,
    jitter: f64,
    report: FitReport,
}

#[derive(Clone, Copy)]
enum Slot {
    Signal,
    Length,
    Offset,
    Noise,
}

struct Layout {
    family: KernelFamily,
    start: [f64; 4],
    free: Vec<(Slot, f64, f64)>,
    scale: f64,
}

impl Layout {
    fn new(spec: &KernelSpec, scale: f64) -> Self {
        let mut free = Vec::new();
        let params = [
            (Slot::Signal, spec.signal_variance, true),
            (Slot::Length, spec.length_scale, spec.family == KernelFamily::Rbf),
            (Slot::Offset, spec.offset, spec.family == KernelFamily::DotProduct),
            (Slot::Noise, spec.noise_variance, true),
        ];
        for (slot, h, used) in params {
            if let (true, Some([lo, hi])) = (used, h.bounds) {
                free.push((slot, lo.ln(), hi.ln()));
            }
        }
        Layout {
            family: spec.family,
            start: [
                spec.signal_variance.value,
                spec.length_scale.value,
                spec.offset.value,
                spec.noise_variance.value,
            ],
            free,
            scale,
        }
    }

    fn theta0(&self) -> Vec<f64> {
        self.free
            .iter()
            .map(|&(slot, lo, hi)| self.start[slot as usize].ln().clamp(lo, hi))
            .collect()
    }

    fn hyper(&self, theta: &[f64]) -> Hyperparameters {
        let mut v = self.start;
        for (&(slot, _, _), &t) in self.free.iter().zip(theta) {
            v[slot as usize] = t.exp();
        }
        Hyperparameters {
            signal_variance: v[0],
            length_scale: v[1],
            offset: if self.family == KernelFamily::DotProduct { v[2] } else { 0.0 },
            noise_variance: v[3] * self.scale,
        }
    }
}

fn kernel_of(family: KernelFamily, h: &Hyperparameters) -> Kernel {
    Kernel {
        family,
        signal_variance: h.signal_variance,
        length_scale: h.length_scale,
        offset: h.offset,
    }
}

/// Cholesky of `k`, adding diagonal jitter from `1e-10` to `1e-4` times the
/// mean diagonal (×10 per try) only if the plain factorization fails.
fn cholesky_with_jitter(k: DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64), SurrogateError> {
    if let Some(c) = Cholesky::new(k.clone()) {
        return Ok((c, 0.0));
    }
    let n = k.nrows().max(1);
    let mean_diag = k.trace() / n as f64;
    let base = if mean_diag > 0.0 && mean_diag.is_finite() { mean_diag } else { 1.0 };
    let mut jitter = 1e-10 * base;
    while jitter <= 1e-4 * base * (1.0 + 1e-9) {
        let mut kj = k.clone();
        for i in 0..k.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(kj) {
            return Ok((c, jitter));
        }
        jitter *= 10.0;
    }
    Err(SurrogateError::NotPositiveDefinite { jitter: jitter / 10.0 })
}

fn log_det(factor: &Cholesky<f64, Dyn>) -> f64 {
    let l = factor.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Dense likelihood: builds and factorizes `K_n` for every trial.
struct DenseLml {
    family: KernelFamily,
    /// Squared distances (RBF) or inner products (dot product).
    pairwise: DMatrix<f64>,
    y: DVector<f64>,
}

impl DenseLml {
    fn new(family: KernelFamily, inputs: &[Vec<f64>], y: &[f64]) -> Self {
        let n = inputs.len();
        let pairwise = DMatrix::from_fn(n, n, |i, j| match family {
            KernelFamily::Rbf => inputs[i]
                .iter()
                .zip(&inputs[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum(),
            KernelFamily::DotProduct => inputs[i].iter().zip(&inputs[j]).map(|(a, b)| a * b).sum(),
        });
        DenseLml {
            family,
            pairwise,
            y: DVector::from_column_slice(y),
        }
    }

    fn covariance(&self, h: &Hyperparameters) -> DMatrix<f64> {
        let mut k = match self.family {
            KernelFamily::Rbf => {
                let c = -1.0 / (2.0 * h.length_scale * h.length_scale);
                self.pairwise.map(|d2| h.signal_variance * (c * d2).exp())
            }
            KernelFamily::DotProduct => self.pairwise.map(|g| h.signal_variance * (h.offset + g)),
        };
        for i in 0..k.nrows() {
            k[(i, i)] += h.noise_variance;
        }
        k
    }

    fn lml(&self, h: &Hyperparameters) -> f64 {
        let n = self.y.len() as f64;
        match cholesky_with_jitter(self.covariance(h)) {
            Ok((factor, _)) => {
                let alpha = factor.solve(&self.y);
                -0.5 * self.y.dot(&alpha) - 0.5 * log_det(&factor) - 0.5 * n * (2.0 * PI).ln()
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// O(d) likelihood for the dot-product kernel with positive noise.
struct LinearLml {
    n: f64,
    d: f64,
    eigenvalues: Vec<f64>,
    /// `Vᵀ Xᵀ y` and `Vᵀ Xᵀ 1`.
    proj_y: Vec<f64>,
    proj_one: Vec<f64>,
    yy: f64,
    sum_y: f64,
}

impl LinearLml {
    fn new(inputs: &[Vec<f64>], y: &[f64]) -> Self {
        let n = inputs.len();
        let d = inputs[0].len();
        let x = DMatrix::from_fn(n, d, |i, j| inputs[i][j]);
        let gram = x.transpose() * &x;
        let eig = SymmetricEigen::new(gram);
        let yv = DVector::from_column_slice(y);
        let xty = eig.eigenvectors.transpose() * (x.transpose() * &yv);
        let xt1 = eig.eigenvectors.transpose() * (x.transpose() * DVector::from_element(n, 1.0));
        LinearLml {
            n: n as f64,
            d: d as f64,
            eigenvalues: eig.eigenvalues.iter().map(|&l| l.max(0.0)).collect(),
            proj_y: xty.iter().copied().collect(),
            proj_one: xt1.iter().copied().collect(),
            yy: yv.dot(&yv),
            sum_y: y.iter().sum(),
        }
    }

    fn lml(&self, h: &Hyperparameters) -> f64 {
        let (s, c0, noise) = (h.signal_variance, h.offset, h.noise_variance);
        if !(noise > 0.0) {
            return f64::NEG_INFINITY;
        }
        let mut yky = self.yy;
        let mut oky = self.sum_y;
        let mut oko = self.n;
        let mut log_det = (self.n - self.d) * noise.ln();
        for i in 0..self.eigenvalues.len() {
            let lambda = self.eigenvalues[i];
            let w = s / (s * lambda + noise);
            let (a, b) = (self.proj_y[i], self.proj_one[i]);
            yky -= w * a * a;
            oky -= w * a * b;
            oko -= w * b * b;
            log_det += (s * lambda + noise).ln();
        }
        yky /= noise;
        oky /= noise;
        oko /= noise;
        let bias = s * c0;
        let denom = 1.0 + bias * oko;
        let quad = yky - bias * oky * oky / denom;
        log_det += denom.ln();
        let v = -0.5 * quad - 0.5 * log_det - 0.5 * self.n * (2.0 * PI).ln();
        if v.is_finite() {
            v
        } else {
            f64::NEG_INFINITY
        }
    }
}

enum Lml {
    Dense(DenseLml),
    Linear(LinearLml),
}

impl Lml {
    fn eval(&self, h: &Hyperparameters) -> f64 {
        match self {
            Lml::Dense(d) => d.lml(h),
            Lml::Linear(l) => l.lml(h),
        }
    }
}

/// Log marginal likelihood of zero-mean GP regression on `(inputs, y)`,
/// computed densely. `y` is used as given (no centring).
pub fn log_marginal_likelihood(
    inputs: &[Vec<f64>],
    y: &[f64],
    kernel: &Kernel,
    noise_variance: f64,
) -> f64 {
    let h = Hyperparameters {
        signal_variance: kernel.signal_variance,
        length_scale: kernel.length_scale,
        offset: kernel.offset,
        noise_variance,
    };
    DenseLml::new(kernel.family, inputs, y).lml(&h)
}

fn check_training_set(inputs: &[Vec<f64>], targets: &[f64]) -> Result<usize, SurrogateError> {
    if inputs.is_empty() {
        return Err(SurrogateError::EmptyTrainingSet);
    }
    if inputs.len() != targets.len() {
        return Err(SurrogateError::LengthMismatch {
            inputs: inputs.len(),
            targets: targets.len(),
        });
    }
    let dim = inputs[0].len();
    for x in inputs {
        if x.len() != dim {
            return Err(SurrogateError::DimensionMismatch {
                expected: dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SurrogateError::NonFinite);
        }
    }
    if targets.iter().any(|v| !v.is_finite()) {
        return Err(SurrogateError::NonFinite);
    }
    Ok(dim)
}

impl GpModel {
    /// Fits hyperparameters by multi-start maximization of the log marginal
    /// likelihood, then caches the posterior factorization.
    pub fn fit<R: Rng + ?Sized>(
        inputs: &[Vec<f64>],
        targets: &[f64],
        spec: &KernelSpec,
        rng: &mut R,
    ) -> Result<Self, SurrogateError> {
        spec.validate()?;
        check_training_set(inputs, targets)?;
        let n = targets.len() as f64;
        let target_mean = if spec.center_targets {
            targets.iter().sum::<f64>() / n
        } else {
            0.0
        };
        let y: Vec<f64> = targets.iter().map(|t| t - target_mean).collect();
        let variance = y.iter().map(|v| v * v).sum::<f64>() / n;
        let scale = if variance > f64::EPSILON * (1.0 + target_mean * target_mean) {
            variance
        } else {
            1.0
        };

        let layout = Layout::new(spec, scale);
        let noise_positive = match spec.noise_variance.bounds {
            Some(_) => true,
            None => spec.noise_variance.value > 0.0,
        };
        let evaluator = if spec.family == KernelFamily::DotProduct && noise_positive {
            Lml::Linear(LinearLml::new(inputs, &y))
        } else {
            Lml::Dense(DenseLml::new(spec.family, inputs, &y))
        };

        let lower: Vec<f64> = layout.free.iter().map(|f| f.1).collect();
        let upper: Vec<f64> = layout.free.iter().map(|f| f.2).collect();
        let mut seeds = vec![layout.theta0()];
        if !layout.free.is_empty() {
            for _ in 1..spec.restarts {
                seeds.push(
                    layout
                        .free
                        .iter()
                        .map(|&(_, lo, hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                        .collect(),
                );
            }
        }

        let mut starts = Vec::with_capacity(seeds.len());
        let mut best: Option<(Hyperparameters, f64)> = None;
        for seed in seeds {
            let initial = layout.hyper(&seed);
            let initial_lml = evaluator.eval(&initial);
            let result = minimize_bounded(
                |theta| -evaluator.eval(&layout.hyper(theta)),
                &seed,
                &lower,
                &upper,
                spec.max_iterations,
            );
            let fitted = layout.hyper(&result.x);
            let fitted_lml = -result.value;
            if best.as_ref().is_none_or(|b| fitted_lml > b.1) {
                best = Some((fitted, fitted_lml));
            }
            starts.push(StartRecord {
                initial,
                initial_lml,
                fitted,
                fitted_lml,
            });
        }
        let (hyper, lml) = best.expect("at least one start");

        let kernel = kernel_of(spec.family, &hyper);
        let (posterior, jitter) = build_posterior(&kernel, hyper.noise_variance, inputs, &y)?;
        Ok(GpModel {
            kernel,
            noise_variance: hyper.noise_variance,
            inputs: inputs.to_vec(),
            target_mean,
            posterior,
            jitter,
            report: FitReport {
                starts,
                lml,
                target_scale: scale,
            },
        })
    }

    /// Conditions a GP with fixed hyperparameters (no search); `targets`
    /// are used as given, without centring.
    pub fn with_hyperparameters(
        inputs: &[Vec<f64>],
        targets: &[f64],
        kernel: Kernel,
        noise_variance: f64,
    ) -> Result<Self, SurrogateError> {
        check_training_set(inputs, targets)?;
        let (posterior, jitter) = build_posterior(&kernel, noise_variance, inputs, targets)?;
        let lml = log_marginal_likelihood(inputs, targets, &kernel, noise_variance);
        Ok(GpModel {
            kernel,
            noise_variance,
            inputs: inputs.to_vec(),
            target_mean: 0.0,
            posterior,
            jitter,
            report: FitReport {
                starts: Vec::new(),
                lml,
                target_scale: 1.0,
            },
        })
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn hyperparameters(&self) -> Hyperparameters {
        Hyperparameters {
            signal_variance: self.kernel.signal_variance,
            length_scale: self.kernel.length_scale,
            offset: self.kernel.offset,
            noise_variance: self.noise_variance,
        }
    }

    pub fn target_mean(&self) -> f64 {
        self.target_mean
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.report.lml
    }

    pub fn report(&self) -> &FitReport {
        &self.report
    }

    /// Diagonal jitter that was needed to factorize `K_n` (0 if none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn training_len(&self) -> usize {
        self.inputs.len()
    }

    pub fn dim(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn is_weight_space(&self) -> bool {
        matches!(self.posterior, Posterior::Weight { .. })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, SurrogateError> {
        self.predict_raw(x).map(|(p, _)| p)
    }

    /// Prediction plus the latent variance before flooring at zero.
    pub fn predict_raw(&self, x: &[f64]) -> Result<(Prediction, f64), SurrogateError> {
        if x.len() != self.dim() {
            return Err(SurrogateError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let (mean, variance) = match &self.posterior {
            Posterior::Dense { factor, alpha } => {
                let kstar = DVector::from_iterator(
                    self.inputs.len(),
                    self.inputs.iter().map(|xi| self.kernel.eval_unchecked(x, xi)),
                );
                let mean = kstar.dot(alpha);
                let v = factor
                    .l_dirty()
                    .solve_lower_triangular(&kstar)
                    .expect("Cholesky factor has a positive diagonal");
                (mean, self.kernel.eval_unchecked(x, x) - v.dot(&v))
            }
            Posterior::Weight { factor, weights } => {
                let phi = feature_row(x, self.kernel.offset);
                let mean = phi.dot(weights);
                let v = factor
                    .l_dirty()
                    .solve_lower_triangular(&phi)
                    .expect("Cholesky factor has a positive diagonal");
                (mean, self.noise_variance * v.dot(&v))
            }
        };
        Ok((
            Prediction {
                mean: mean + self.target_mean,
                std: variance.max(0.0).sqrt(),
            },
            variance,
        ))
    }
}

fn feature_row(x: &[f64], offset: f64) -> DVector<f64> {
    let mut phi = DVector::zeros(x.len() + 1);
    phi[0] = offset.sqrt();
    for (i, &v) in x.iter().enumerate() {
        phi[i + 1] = v;
    }
    phi
}

fn build_posterior(
    kernel: &Kernel,
    noise: f64,
    inputs: &[Vec<f64>],
    y: &[f64],
) -> Result<(Posterior, f64), SurrogateError> {
    let n = inputs.len();
    let d = inputs[0].len();
    let yv = DVector::from_column_slice(y);
    if kernel.family == KernelFamily::DotProduct && noise > 0.0 && n > d + 1 {
        let phi = DMatrix::from_fn(n, d + 1, |i, j| {
            if j == 0 {
                kernel.offset.sqrt()
            } else {
                inputs[i][j - 1]
            }
        });
        let mut precision = phi.transpose() * &phi;
        let ridge = noise / kernel.signal_variance;
        for i in 0..=d {
            precision[(i, i)] += ridge;
        }
        if let Some(factor) = Cholesky::new(precision) {
            let weights = factor.solve(&(phi.transpose() * &yv));
            return Ok((Posterior::Weight { factor, weights }, 0.0));
        }
    }
    let mut k = DMatrix::from_fn(n, n, |i, j| kernel.eval_unchecked(&inputs[i], &inputs[j]));
    for i in 0..n {
        k[(i, i)] += noise;
    }
    let (factor, jitter) = cholesky_with_jitter(k)?;
    let alpha = factor.solve(&yv);
    Ok((Posterior::Dense { factor, alpha }, jitter))
}
