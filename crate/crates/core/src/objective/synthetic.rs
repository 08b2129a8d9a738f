use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use super::{Objective, ObjectiveError};
use crate::molgraph::{canonical_key, MolecularGraph};
use crate::shingles::{extract_shingles, ShingleKey};

/// Raw shingle sums lie in [-9, 9] for 9 heavy atoms; this maps them onto
/// [-10, -1].
pub const LINEAR_OFFSET: f64 = -5.5;
pub const LINEAR_SCALE: f64 = 0.5;

fn digest_u64(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}

/// Weight in [-1, 1) for `key`: SHA-256 of the little-endian seed followed by
/// the shingle string, first 8 bytes little-endian, top 53 bits as a unit
/// fraction.
pub fn shingle_weight(seed: u64, key: &ShingleKey) -> f64 {
    let bits = digest_u64(&[&seed.to_le_bytes(), key.to_string().as_bytes()]);
    let unit = (bits >> 11) as f64 / (1u64 << 53) as f64;
    2.0 * unit - 1.0
}

/// Linear in shingle counts; the surrogate's dot-product kernel can learn
/// it exactly.
#[derive(Debug, Clone)]
pub struct LinearShingles {
    seed: u64,
    noise_std: f64,
}

impl LinearShingles {
    pub fn new(seed: u64) -> Self {
        LinearShingles { seed, noise_std: 0.0 }
    }

    pub fn with_noise(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }

    pub fn noiseless_value(&self, g: &MolecularGraph) -> f64 {
        // Summed in key order so relabeling cannot change the rounding.
        let mut shingles = extract_shingles(g);
        shingles.sort();
        let raw: f64 = shingles
            .iter()
            .map(|k| shingle_weight(self.seed, k))
            .sum();
        LINEAR_OFFSET + LINEAR_SCALE * raw
    }
}

impl Objective for LinearShingles {
    fn evaluate(&self, g: &MolecularGraph) -> Result<f64, ObjectiveError> {
        Ok(self.noiseless_value(g) + molecule_noise(self.seed, self.noise_std, g))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AtomCount;

impl Objective for AtomCount {
    fn evaluate(&self, g: &MolecularGraph) -> Result<f64, ObjectiveError> {
        Ok(g.atom_count() as f64)
    }
}

/// Gaussian noise that is a fixed function of (seed, molecule).
fn molecule_noise(seed: u64, std: f64, g: &MolecularGraph) -> f64 {
    if std == 0.0 {
        return 0.0;
    }
    let key = canonical_key(g);
    let stream = digest_u64(&[b"noise", &seed.to_le_bytes(), key.as_str().as_bytes()]);
    let normal = Normal::new(0.0, std).expect("validated noise std");
    normal.sample(&mut ChaCha8Rng::seed_from_u64(stream))
}

pub(crate) struct Noisy<O> {
    inner: O,
    seed: u64,
    std: f64,
}

impl<O> Noisy<O> {
    pub(crate) fn new(inner: O, seed: u64, std: f64) -> Self {
        Noisy { inner, seed, std }
    }
}

impl<O: Objective> Objective for Noisy<O> {
    fn evaluate(&self, g: &MolecularGraph) -> Result<f64, ObjectiveError> {
        Ok(self.inner.evaluate(g)? + molecule_noise(self.seed, self.std, g))
    }
}
