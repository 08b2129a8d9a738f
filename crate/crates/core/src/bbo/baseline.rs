use std::collections::HashSet;
use std::io::Write;

use super::{stream, BboConfig, BboError, STREAM_BASELINE};
use crate::evolve::{ea_maximize_stepwise, EaConfig, EaError, FitnessError};
use crate::objective::{cached, Objective, ObjectiveError};
use crate::runlog::{CallRecord, LogFooter, RunLogWriter, StopReason, Stopwatch};

/// The EA used directly on the exact objective, with the same budget
/// accounting and log schema as a surrogate-assisted run. Only `ea`,
/// `budget`, `masterSeed` and `seedMolecules` are used from `cfg`; the EA
/// runs until the budget is spent or no parent can be mutated.
pub fn run_ea_baseline<O, W>(
    cfg: &BboConfig,
    objective: &O,
    log: &mut RunLogWriter<W>,
) -> Result<StopReason, BboError>
where
    O: Objective + ?Sized,
    W: Write,
{
    cfg.validate().map_err(BboError::InvalidConfig)?;
    let initial = cfg.parse_seed_molecules().map_err(BboError::InvalidConfig)?;
    let ea = EaConfig {
        steps: usize::MAX,
        ..cfg.ea.clone()
    };
    let exact = cached(objective);
    let watch = Stopwatch::start(log.log().header.clock, 0.0, 0.0);
    let mut best: Option<(f64, String)> = None;
    let mut fatal: Option<ObjectiveError> = None;
    let mut io_error: Option<std::io::Error> = None;
    let mut rng = stream(cfg.master_seed, 0, 0, STREAM_BASELINE);

    let outcome = ea_maximize_stepwise(
        |m, step| {
            if exact.calls() >= cfg.budget {
                return Err(FitnessError::Halt);
            }
            let result = exact.evaluate_molecule(m);
            let call_index = exact.calls();
            let (value, error) = match result {
                Ok((v, _)) if v.is_finite() => (Some(v), None),
                Ok((v, _)) => (None, Some(format!("non-finite value {v}"))),
                Err(e) if e.is_fatal() => {
                    fatal = Some(e);
                    return Err(FitnessError::Halt);
                }
                Err(e) => (None, Some(e.to_string())),
            };
            if let Some(v) = value {
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, m.smiles().to_string()));
                }
            }
            let (cpu, wall) = watch.read(call_index);
            let pushed = log.push(CallRecord {
                call_index,
                step: step as u64,
                restart: 0,
                smiles: m.smiles().to_string(),
                value,
                best_so_far: best.as_ref().map(|(b, _)| *b),
                cpu_time_s: cpu,
                wall_time_s: wall,
                error,
            });
            if let Err(e) = pushed {
                io_error = Some(e);
                return Err(FitnessError::Halt);
            }
            value.ok_or(FitnessError::Rejected)
        },
        &initial,
        &ea,
        &HashSet::new(),
        &mut rng,
    );
    if let Some(e) = io_error {
        return Err(e.into());
    }
    let reason = if fatal.is_some() {
        StopReason::ObjectiveUnavailable
    } else if exact.calls() >= cfg.budget {
        StopReason::Budget
    } else {
        StopReason::Exhausted
    };
    match outcome {
        Ok(_) | Err(EaError::NoViableIndividual) => {}
        Err(e) => return Err(BboError::InvalidConfig(e.to_string())),
    }
    log.finish(LogFooter {
        complete: reason != StopReason::ObjectiveUnavailable,
        stop_reason: reason,
        calls: exact.calls(),
        best_value: best.as_ref().map(|(v, _)| *v),
        best_smiles: best.map(|(_, s)| s),
    })?;
    match fatal {
        Some(e) => Err(BboError::Objective(e)),
        None => Ok(reason),
    }
}
