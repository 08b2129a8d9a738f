//! Benchmark metrics over run logs (ECDF over a target grid, expected
//! running time) and the surrogate learning-curve harness.

mod dataset;
mod learning;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runlog::{CallRecord, RunLog};

pub use dataset::{generate_molecules, read_dataset, write_dataset, BadLine, Dataset};
pub use learning::{learning_curve, write_learning_curve_csv, CurveRow};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no run logs given")]
    NoLogs,
    #[error("run logs come from different objectives")]
    MixedObjectives,
    #[error("invalid target grid: {0}")]
    InvalidGrid(String),
    #[error("{0}")]
    InsufficientData(String),
    #[error("{bad} of {total} dataset lines are unreadable (first at line {first})")]
    TooManyBadLines { bad: usize, total: usize, first: usize },
    #[error(transparent)]
    Surrogate(#[from] crate::surrogate::SurrogateError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Evenly spaced objective targets, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TargetGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for TargetGrid {
    fn default() -> Self {
        TargetGrid {
            lo: -10.0,
            hi: -1.0,
            step: 0.01,
        }
    }
}

impl TargetGrid {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self, BenchError> {
        let g = TargetGrid { lo, hi, step };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(BenchError::InvalidGrid(format!("need lo < hi, got {} and {}", self.lo, self.hi)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(BenchError::InvalidGrid(format!("step must be positive, got {}", self.step)));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        // The small slack absorbs rounding in (hi - lo) / step.
        ((self.hi - self.lo) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn targets(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.lo + i as f64 * self.step).collect()
    }
}

/// Effort measure along the horizontal axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Axis {
    Calls,
    CpuTime,
}

impl Axis {
    pub fn of(self, r: &CallRecord) -> f64 {
        match self {
            Axis::Calls => r.call_index as f64,
            Axis::CpuTime => r.cpu_time_s,
        }
    }
}

/// Fails unless every log shares the same objective description.
pub fn check_same_objective(logs: &[RunLog]) -> Result<(), BenchError> {
    let first = logs.first().ok_or(BenchError::NoLogs)?;
    if logs.iter().any(|l| l.header.objective != first.header.objective) {
        return Err(BenchError::MixedObjectives);
    }
    Ok(())
}

/// Fraction of (run, target) pairs reached by effort `x`, evaluated at every
/// effort where some run improved.
pub fn ecdf(logs: &[RunLog], grid: &TargetGrid, axis: Axis) -> Result<Vec<(f64, f64)>, BenchError> {
    check_same_objective(logs)?;
    ecdf_unchecked(logs, grid, axis)
}

/// As [`ecdf`] without the same-objective check.
pub fn ecdf_unchecked(logs: &[RunLog], grid: &TargetGrid, axis: Axis) -> Result<Vec<(f64, f64)>, BenchError> {
    if logs.is_empty() {
        return Err(BenchError::NoLogs);
    }
    grid.validate()?;
    let targets = grid.targets();
    let reached = |best: Option<f64>| best.map_or(0, |b| targets.partition_point(|&t| t <= b));

    // (effort, run, targets reached from then on)
    let mut events: Vec<(f64, usize, usize)> = Vec::new();
    let mut last_x = 0.0f64;
    for (run, log) in logs.iter().enumerate() {
        let mut prev = 0;
        for r in &log.records {
            let x = axis.of(r);
            last_x = last_x.max(x);
            let now = reached(r.best_so_far);
            if now != prev {
                events.push((x, run, now));
                prev = now;
            }
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let denom = (logs.len() * targets.len()) as f64;
    let mut per_run = vec![0usize; logs.len()];
    let mut total = 0usize;
    let mut curve: Vec<(f64, f64)> = Vec::new();
    for (x, run, now) in events {
        total = total + now - per_run[run];
        per_run[run] = now;
        let p = total as f64 / denom;
        match curve.last_mut() {
            Some(last) if last.0 == x => last.1 = p,
            _ => curve.push((x, p)),
        }
    }
    let terminal = total as f64 / denom;
    if curve.last().is_none_or(|l| l.0 < last_x) {
        curve.push((last_x, terminal));
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ert {
    Effort(f64),
    NoSuccess,
}

/// Summary of one target over a set of runs.
#[derive(Debug, Clone, PartialEq)]
pub struct ErtSummary {
    pub ert: Ert,
    pub successes: usize,
    pub runs: usize,
    /// Over successful runs only.
    pub min: Option<f64>,
    pub median: Option<f64>,
    pub max: Option<f64>,
}

/// Effort at which `log` first reached `target`, or `None`.
pub fn hitting_effort(log: &RunLog, target: f64, axis: Axis) -> Option<f64> {
    log.records
        .iter()
        .find(|r| r.best_so_far.is_some_and(|b| b >= target))
        .map(|r| axis.of(r))
}

/// Total effort until success (or the whole run for failures) divided by
/// the number of successful runs.
pub fn ert(logs: &[RunLog], target: f64, axis: Axis) -> Result<Ert, BenchError> {
    Ok(ert_summary(logs, target, axis)?.ert)
}

pub fn ert_summary(logs: &[RunLog], target: f64, axis: Axis) -> Result<ErtSummary, BenchError> {
    check_same_objective(logs)?;
    ert_summary_unchecked(logs, target, axis)
}

pub fn ert_summary_unchecked(logs: &[RunLog], target: f64, axis: Axis) -> Result<ErtSummary, BenchError> {
    if logs.is_empty() {
        return Err(BenchError::NoLogs);
    }
    let mut spent = 0.0;
    let mut hits = Vec::new();
    for log in logs {
        match hitting_effort(log, target, axis) {
            Some(x) => {
                spent += x;
                hits.push(x);
            }
            None => spent += log.records.last().map_or(0.0, |r| axis.of(r)),
        }
    }
    hits.sort_by(f64::total_cmp);
    let median = if hits.is_empty() {
        None
    } else if hits.len() % 2 == 1 {
        Some(hits[hits.len() / 2])
    } else {
        Some(0.5 * (hits[hits.len() / 2 - 1] + hits[hits.len() / 2]))
    };
    Ok(ErtSummary {
        ert: if hits.is_empty() {
            Ert::NoSuccess
        } else {
            Ert::Effort(spent / hits.len() as f64)
        },
        successes: hits.len(),
        runs: logs.len(),
        min: hits.first().copied(),
        median,
        max: hits.last().copied(),
    })
}

pub fn write_ecdf_csv<W: Write>(out: W, curve: &[(f64, f64)]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["x", "proportion"])?;
    for (x, p) in curve {
        w.write_record([x.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub const NO_SUCCESS: &str = "no success";

/// One row per (method, target).
pub fn write_ert_csv<W: Write>(out: W, rows: &[(String, f64, ErtSummary)]) -> Result<(), BenchError> {
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "target", "ert", "successes", "runs", "min", "median", "max"])?;
    for (method, target, s) in rows {
        let ert = match s.ert {
            Ert::Effort(e) => e.to_string(),
            Ert::NoSuccess => NO_SUCCESS.to_string(),
        };
        w.write_record([
            method.clone(),
            target.to_string(),
            ert,
            s.successes.to_string(),
            s.runs.to_string(),
            opt(s.min),
            opt(s.median),
            opt(s.max),
        ])?;
    }
    w.flush()?;
    Ok(())
}
