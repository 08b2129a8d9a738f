use std::f64::consts::{PI, SQRT_2};

use libm::erfc;

use super::{Prediction, SurrogateError};

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// `E[max(Y - f_max - xi, 0)]` for `Y ~ N(mean, std²)` (maximization).
pub fn expected_improvement(p: Prediction, f_max: f64, xi: f64) -> Result<f64, SurrogateError> {
    if !(xi >= 0.0) {
        return Err(SurrogateError::NegativeXi(xi));
    }
    let gain = p.mean - f_max - xi;
    if p.std <= 0.0 {
        return Ok(gain.max(0.0));
    }
    let z = gain / p.std;
    let ei = gain * normal_cdf(z) + p.std * normal_pdf(z);
    Ok(ei.max(0.0))
}
