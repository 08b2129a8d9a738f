//! Acceptance checks, one PASS/FAIL line per criterion.

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use molbbo::bbo::{run_ea_baseline, BboConfig, BboRun, RunOptions};
use molbbo::bench::{ecdf, ert, generate_molecules, hitting_effort, learning_curve, Axis, Ert, TargetGrid};
use molbbo::evolve::{mutate, random_walk, EaConfig};
use molbbo::molgraph::{canonical_key, AtomType, MolecularGraph};
use molbbo::objective::{LinearShingles, Objective};
use molbbo::runlog::{CallRecord, Clock, LogHeader, RunLog, RunLogWriter, SCHEMA_VERSION};
use molbbo::shingles::ShingleDictionary;
use molbbo::surrogate::{expected_improvement, normal_pdf, GpModel, Kernel, KernelSpec, Prediction};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Seed of the synthetic objective used for the comparison runs.
const OBJECTIVE_SEED: u64 = 2024;
/// Best of 10^5 random walks from methane (lengths 1..=20, walk rng seed 7)
/// minus 5% of the observed value range; re-derived by the ignored test in
/// `target_fixture.rs`.
const TARGET: f64 = -2.421492274592932;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn random_inputs(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

/// Posterior mean and latent variance by explicit inversion of K + noise·I.
fn dense_oracle(kernel: &Kernel, noise: f64, xs: &[Vec<f64>], ys: &[f64], x: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let mut k = DMatrix::from_fn(n, n, |i, j| kernel.eval(&xs[i], &xs[j]).unwrap());
    for i in 0..n {
        k[(i, i)] += noise;
    }
    let inv = k.try_inverse().expect("positive definite");
    let kstar = DVector::from_fn(n, |i, _| kernel.eval(x, &xs[i]).unwrap());
    let y = DVector::from_column_slice(ys);
    let mean = kstar.dot(&(&inv * y));
    let var = kernel.eval(x, x).unwrap() - kstar.dot(&(&inv * &kstar));
    (mean, var)
}

fn gp_matches_dense_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for case in 0..10 {
        let d = 3 + case % 6;
        let xs = random_inputs(&mut rng, 5, d);
        let ys: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
        let kernel = if case % 2 == 0 {
            Kernel::rbf(rng.random_range(0.5..2.0), rng.random_range(0.5..2.0))
        } else {
            Kernel::dot_product(rng.random_range(0.5..2.0), rng.random_range(0.0..1.0))
        };
        let noise = rng.random_range(0.01..0.5);
        let model = GpModel::with_hyperparameters(&xs, &ys, kernel, noise).unwrap();
        for x in random_inputs(&mut rng, 5, d) {
            let (mean, var) = dense_oracle(&kernel, noise, &xs, &ys, &x);
            let (p, raw_var) = model.predict_raw(&x).unwrap();
            worst = worst.max((p.mean - mean).abs()).max((raw_var - var).abs());
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-8 && elapsed < Duration::from_secs(1),
        format!("max abs error {worst:.2e}, {elapsed:.2?}"),
    )
}

fn ei_matches_monte_carlo() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let samples = 1_000_000;
    let mut worst_z: f64 = 0.0;
    for _ in 0..20 {
        let mean = rng.random_range(-3.0..3.0);
        let std = rng.random_range(0.1..2.0);
        // Keeps Z = (mean - fMax - xi) / std within [-3, 3], where sampling
        // resolves EI.
        let xi = rng.random_range(0.0..0.5);
        let f_max = mean - xi - std * rng.random_range(-3.0..3.0);
        let exact = expected_improvement(Prediction { mean, std }, f_max, xi).unwrap();
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..samples {
            let z: f64 = StandardNormal.sample(&mut rng);
            let gain = (mean + std * z - f_max - xi).max(0.0);
            sum += gain;
            sum_sq += gain * gain;
        }
        let n = samples as f64;
        let mc = sum / n;
        let se = ((sum_sq / n - mc * mc) / (n - 1.0)).sqrt();
        worst_z = worst_z.max((exact - mc).abs() / se);
    }
    let at_zero = expected_improvement(Prediction { mean: 1.5, std: 1.0 }, 1.0, 0.5).unwrap();
    let phi_ok = (at_zero - 0.398942).abs() <= 1e-6 && (normal_pdf(0.0) - 0.398942).abs() <= 1e-6;
    let elapsed = start.elapsed();
    verdict(
        worst_z <= 3.0 && phi_ok && elapsed < Duration::from_secs(10),
        format!("max deviation {worst_z:.2} standard errors, EI at Z=0 {at_zero:.7}, {elapsed:.2?}"),
    )
}

fn fitted_lml_dominates_starts() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    for case in 0..20 {
        let d = rng.random_range(2..7);
        let n = rng.random_range(8..30);
        let xs = random_inputs(&mut rng, n, d);
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>().sin() + 0.1 * rng.random_range(-1.0..1.0))
            .collect();
        let spec = if case % 2 == 0 {
            KernelSpec::rbf()
        } else {
            KernelSpec::dot_product()
        };
        let model = GpModel::fit(&xs, &ys, &spec, &mut rng).unwrap();
        let report = model.report();
        for s in &report.starts {
            if s.fitted_lml < s.initial_lml || report.lml < s.initial_lml {
                violations += 1;
            }
        }
    }
    verdict(violations == 0, format!("{violations} violations"))
}

fn methane() -> MolecularGraph {
    MolecularGraph::single_atom(AtomType::C)
}

fn random_graph(rng: &mut ChaCha8Rng, cfg: &EaConfig) -> MolecularGraph {
    let len = rng.random_range(1..=20);
    random_walk(&methane(), len, cfg, rng)
}

fn shingles_ignore_relabeling() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = EaConfig::default();
    let mut dict = ShingleDictionary::new(10_000);
    let mut failures = 0;
    for _ in 0..200 {
        let g = random_graph(&mut rng, &cfg);
        let base = dict.encode(&g).unwrap();
        if base.total() as usize != g.atom_count() {
            failures += 1;
        }
        for _ in 0..5 {
            let mut perm: Vec<usize> = (0..g.atom_count()).collect();
            for i in (1..perm.len()).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let enc = dict.encode_frozen(&g.permuted(&perm));
            if enc.unseen != 0 || enc.vector != base {
                failures += 1;
            }
        }
    }
    verdict(failures == 0, format!("{failures} mismatches over 200 graphs x 5 relabelings"))
}

fn mutations_stay_valid() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = EaConfig::default();
    let tabu = HashSet::new();
    let mut invalid = 0;
    let mut done = 0;
    while done < 100_000 {
        let parent = random_graph(&mut rng, &cfg);
        for _ in 0..100 {
            let Ok(child) = mutate(&parent, &cfg, &tabu, &mut rng) else {
                continue;
            };
            done += 1;
            if child.graph.validate(cfg.heavy_atom_limit).is_err() || canonical_key(&child.graph) != child.key {
                invalid += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        invalid == 0 && elapsed < Duration::from_secs(30),
        format!("{invalid} invalid of {done}, {elapsed:.2?}"),
    )
}

fn header(method: &str) -> LogHeader {
    LogHeader {
        schema_version: SCHEMA_VERSION,
        method: method.into(),
        seed: 0,
        clock: Clock::Logical,
        objective: serde_json::json!({"kind": "syntheticLinearShingles", "seed": OBJECTIVE_SEED}),
        config: serde_json::Value::Null,
    }
}

fn bbo_log(seed: u64) -> RunLog {
    let cfg = BboConfig {
        master_seed: seed,
        ..BboConfig::default()
    };
    let mut run = BboRun::new(cfg).unwrap();
    let mut log = RunLogWriter::in_memory(header("bbo"));
    run.run(&LinearShingles::new(OBJECTIVE_SEED), &RunOptions { threads: 1 }, &mut log, |_| Ok(()))
        .unwrap();
    log.into_log()
}

fn ea_log(seed: u64) -> RunLog {
    let cfg = BboConfig {
        master_seed: seed,
        ..BboConfig::default()
    };
    let mut log = RunLogWriter::in_memory(header("ea"));
    run_ea_baseline(&cfg, &LinearShingles::new(OBJECTIVE_SEED), &mut log).unwrap();
    log.into_log()
}

fn no_repeated_evaluations(log: &RunLog) -> Verdict {
    let keys: HashSet<&str> = log.records.iter().map(|r| r.smiles.as_str()).collect();
    let dupes = log.records.len() - keys.len();
    verdict(
        dupes == 0 && log.records.len() == 1000,
        format!("{} calls, {dupes} duplicate keys", log.records.len()),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Calls to reach the target; a miss counts as infinitely many.
fn calls_to_target(log: &RunLog) -> f64 {
    hitting_effort(log, TARGET, Axis::Calls).unwrap_or(f64::INFINITY)
}

fn bbo_beats_ea(bbo: &[RunLog]) -> Verdict {
    let start = Instant::now();
    let bbo_calls: Vec<f64> = bbo.iter().map(calls_to_target).collect();
    let ea_calls: Vec<f64> = (0..10).map(|s| calls_to_target(&ea_log(s))).collect();
    let (b, e) = (median(bbo_calls.clone()), median(ea_calls.clone()));
    verdict(
        b <= 0.5 * e,
        format!(
            "median calls to {TARGET}: surrogate {b} vs EA {e} (ratio {:.2}); surrogate {bbo_calls:?}, EA {ea_calls:?}, EA runs {:.1?}",
            b / e,
            start.elapsed()
        ),
    )
}

fn fixture_log(best: &[f64]) -> RunLog {
    let mut log = RunLog::new(header("bbo"));
    for (i, &b) in best.iter().enumerate() {
        log.records.push(CallRecord {
            call_index: i as u64 + 1,
            step: 0,
            restart: 0,
            smiles: "C".into(),
            value: Some(b),
            best_so_far: Some(b),
            cpu_time_s: 0.0,
            wall_time_s: 0.0,
            error: None,
        });
    }
    log
}

/// Best-so-far of -8 until `hit`, then -1.5, for `len` calls.
fn hitting_log(hit: Option<usize>, len: usize) -> RunLog {
    fixture_log(&(1..=len).map(|i| if hit.is_some_and(|h| i >= h) { -1.5 } else { -8.0 }).collect::<Vec<_>>())
}

fn metrics_reproduce_fixtures() -> Verdict {
    let grid = TargetGrid::default();
    let curve = ecdf(&[fixture_log(&[-7.0, -5.0])], &grid, Axis::Calls).unwrap();
    let terminal = curve.last().unwrap().1;
    let two = ert(&[hitting_log(Some(100), 1000), hitting_log(Some(300), 1000)], -2.0, Axis::Calls).unwrap();
    let failed = ert(&[hitting_log(Some(100), 1000), hitting_log(None, 1000)], -2.0, Axis::Calls).unwrap();
    verdict(
        terminal == 501.0 / 901.0 && two == Ert::Effort(200.0) && failed == Ert::Effort(1100.0),
        format!("ECDF terminal {terminal} (501/901 = {}), ERT {two:?} and {failed:?}", 501.0 / 901.0),
    )
}

fn reruns_are_identical(first: &RunLog) -> Verdict {
    let again = bbo_log(0);
    let (a, b) = (first.to_jsonl(), again.to_jsonl());
    verdict(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

fn learning_curve_improves() -> Verdict {
    let start = Instant::now();
    let obj = LinearShingles::new(OBJECTIVE_SEED);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let data: Vec<_> = generate_molecules(2000, 20, &EaConfig::default(), &mut rng)
        .unwrap()
        .into_iter()
        .map(|m| {
            let v = obj.evaluate(&m.graph).unwrap();
            (m, v)
        })
        .collect();
    let lo = data.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    let hi = data.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let rows = learning_curve(&data, &[50, 100, 500, 1000], 10, &KernelSpec::dot_product(), &mut rng).unwrap();
    let (first, last) = (rows[0].mae_mean, rows[3].mae_mean);
    let table: Vec<String> = rows.iter().map(|r| format!("{}: {:.4}", r.size, r.mae_mean)).collect();
    verdict(
        last < first && last < 0.05 * range,
        format!(
            "MAE {} (dataset range {range:.3}, limit {:.4}), {:.1?}",
            table.join(", "),
            0.05 * range,
            start.elapsed()
        ),
    )
}

fn main() -> ExitCode {
    // The criterion 6 and 9 runs reuse the first comparison run.
    let bbo_runs: Vec<RunLog> = (0..10).map(bbo_log).collect();
    let results = [
        (1, "GP posterior matches dense inversion", gp_matches_dense_oracle()),
        (2, "EI matches Monte Carlo", ei_matches_monte_carlo()),
        (3, "fitted LML dominates every start", fitted_lml_dominates_starts()),
        (4, "shingle vectors ignore relabeling", shingles_ignore_relabeling()),
        (5, "mutations stay valid", mutations_stay_valid()),
        (6, "no molecule is evaluated twice", no_repeated_evaluations(&bbo_runs[0])),
        (7, "surrogate search needs at most half the EA calls", bbo_beats_ea(&bbo_runs)),
        (8, "ECDF and ERT fixtures", metrics_reproduce_fixtures()),
        (9, "sequential reruns are byte-identical", reruns_are_identical(&bbo_runs[0])),
        (10, "learning curve improves and is accurate", learning_curve_improves()),
    ];
    let mut all = true;
    for (n, name, v) in &results {
        println!("criterion {n:>2} {}: {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        all &= v.pass;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
