use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BenchError;
use crate::molgraph::Molecule;
use crate::shingles::ShingleDictionary;
use crate::surrogate::{GpModel, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveRow {
    pub size: usize,
    pub mae_mean: f64,
    pub mae_std: f64,
}

/// Cross-validated test error against training-set size.
///
/// The data are shuffled once and cut into `folds` equal folds (any
/// remainder is never held out). For each fold and size `s`, the surrogate
/// is trained on the first `s` molecules outside the fold, with a shingle
/// dictionary built from those molecules alone, and scored on the fold.
pub fn learning_curve<R: Rng + ?Sized>(
    data: &[(Molecule, f64)],
    sizes: &[usize],
    folds: usize,
    spec: &KernelSpec,
    rng: &mut R,
) -> Result<Vec<CurveRow>, BenchError> {
    if folds < 2 {
        return Err(BenchError::InsufficientData("at least 2 folds are needed".into()));
    }
    let fold_len = data.len() / folds;
    let largest = sizes.iter().copied().max().unwrap_or(0);
    if fold_len == 0 || largest + fold_len > data.len() || sizes.contains(&0) {
        return Err(BenchError::InsufficientData(format!(
            "{} molecules cannot give {folds} folds with training sets of {largest}",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let fit_seed: u64 = rng.random();

    let mut errors = vec![Vec::with_capacity(folds); sizes.len()];
    for k in 0..folds {
        let held = &order[k * fold_len..(k + 1) * fold_len];
        let pool: Vec<usize> = order[..k * fold_len]
            .iter()
            .chain(&order[(k + 1) * fold_len..])
            .copied()
            .collect();
        for (si, &size) in sizes.iter().enumerate() {
            let train = &pool[..size];
            // One shingle per atom bounds the dictionary size.
            let atoms = train.iter().map(|&i| data[i].0.graph.atom_count()).sum();
            let mut dict = ShingleDictionary::new(atoms);
            for &i in train {
                dict.encode(&data[i].0.graph).expect("capacity covers every atom");
            }
            let xs: Vec<Vec<f64>> = train.iter().map(|&i| dict.features_frozen(&data[i].0.graph).0).collect();
            let ys: Vec<f64> = train.iter().map(|&i| data[i].1).collect();
            let mut fit_rng = ChaCha8Rng::seed_from_u64(fit_seed ^ ((k as u64) << 32 | si as u64));
            let model = GpModel::fit(&xs, &ys, spec, &mut fit_rng)?;
            let mut total = 0.0;
            for &i in held {
                let p = model.predict(&dict.features_frozen(&data[i].0.graph).0)?;
                total += (p.mean - data[i].1).abs();
            }
            errors[si].push(total / held.len() as f64);
        }
    }
    Ok(sizes
        .iter()
        .zip(errors)
        .map(|(&size, e)| {
            let n = e.len() as f64;
            let mean = e.iter().sum::<f64>() / n;
            let var = e.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            CurveRow {
                size,
                mae_mean: mean,
                mae_std: var.sqrt(),
            }
        })
        .collect())
}

/// CSV with a `#` metadata line naming the protocol, then
/// `size,mae_mean,mae_std`.
pub fn write_learning_curve_csv<W: Write>(mut out: W, folds: usize, rows: &[CurveRow]) -> Result<(), BenchError> {
    writeln!(out, "# protocol: {folds}-fold cross validation")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["size", "mae_mean", "mae_std"])?;
    for r in rows {
        w.write_record([r.size.to_string(), r.mae_mean.to_string(), r.mae_std.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
