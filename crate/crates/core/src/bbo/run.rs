use std::collections::HashSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    ei_fitness, select_initial_population, stream, BboConfig, BboError, EvaluatedMolecule,
    STREAM_FIT, STREAM_RESTART,
};
use crate::evolve::{ea_maximize, Evaluated};
use crate::molgraph::{CanonicalKey, Molecule};
use crate::objective::{Objective, ObjectiveError};
use crate::runlog::{CallRecord, LogFooter, RunLogWriter, StopReason, Stopwatch};
use crate::shingles::{ShingleDictionary, ShingleKey};
use crate::surrogate::GpModel;

/// Consecutive steps without a single new candidate before giving up.
const MAX_IDLE_STEPS: u32 = 5;

pub const STATE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads for restarts and evaluations; 1 runs everything on
    /// the calling thread. Results do not depend on this.
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { threads: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: u64,
    /// Proposals sent to the objective, in restart order.
    pub picks: Vec<(u64, Molecule)>,
    pub surrogate_calls: u64,
    /// Restarts whose trace had no eligible molecule.
    pub empty_restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct StoredRecord {
    pub smiles: String,
    pub value: f64,
    pub step: u64,
    pub restart: u64,
    pub call_index: u64,
    pub wall_time_s: f64,
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct BboState {
    pub schema_version: u32,
    pub config: BboConfig,
    pub dictionary: Vec<ShingleKey>,
    pub evaluated: Vec<StoredRecord>,
    /// Molecules the objective failed on, in call order.
    pub failed: Vec<CanonicalKey>,
    pub calls: u64,
    /// Step to run next; 0 means the initial molecules are not evaluated yet.
    pub next_step: u64,
    pub idle_steps: u32,
    pub stopped: Option<StopReason>,
}

/// A surrogate-assisted optimization run.
#[derive(Debug, Clone)]
pub struct BboRun {
    cfg: BboConfig,
    dictionary: ShingleDictionary,
    d: Vec<EvaluatedMolecule>,
    known: HashSet<CanonicalKey>,
    failed: Vec<CanonicalKey>,
    calls: u64,
    next_step: u64,
    idle_steps: u32,
    best: Option<usize>,
    stopped: Option<StopReason>,
}

/// Picks in restart order, surrogate calls, restarts without a pick.
type Proposal = (Vec<(u64, Molecule)>, u64, usize);

enum Outcome {
    Value(f64),
    Failed(String),
}

impl BboRun {
    pub fn new(cfg: BboConfig) -> Result<Self, BboError> {
        cfg.validate().map_err(BboError::InvalidConfig)?;
        Ok(BboRun {
            dictionary: ShingleDictionary::new(cfg.shingle_capacity),
            cfg,
            d: Vec::new(),
            known: HashSet::new(),
            failed: Vec::new(),
            calls: 0,
            next_step: 0,
            idle_steps: 0,
            best: None,
            stopped: None,
        })
    }

    pub fn config(&self) -> &BboConfig {
        &self.cfg
    }

    pub fn dataset(&self) -> &[EvaluatedMolecule] {
        &self.d
    }

    pub fn dictionary(&self) -> &ShingleDictionary {
        &self.dictionary
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn best(&self) -> Option<&EvaluatedMolecule> {
        self.best.map(|i| &self.d[i])
    }

    pub fn stopped(&self) -> Option<StopReason> {
        self.stopped
    }

    pub fn next_step(&self) -> u64 {
        self.next_step
    }

    fn budget_left(&self) -> u64 {
        self.cfg.budget.saturating_sub(self.calls)
    }

    /// Runs until the budget is spent, proposals dry up or the objective
    /// becomes unavailable. `checkpoint` is called after every step.
    pub fn run<O, W, C>(
        &mut self,
        objective: &O,
        options: &RunOptions,
        log: &mut RunLogWriter<W>,
        mut checkpoint: C,
    ) -> Result<StopReason, BboError>
    where
        O: Objective + ?Sized,
        W: Write,
        C: FnMut(&BboRun) -> Result<(), BboError>,
    {
        let pool = if options.threads > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(options.threads)
                    .build()
                    .map_err(|e| BboError::InvalidConfig(e.to_string()))?,
            )
        } else {
            None
        };
        let clock = log.log().header.clock;
        let (cpu0, wall0) = log
            .log()
            .records
            .last()
            .map_or((0.0, 0.0), |r| (r.cpu_time_s, r.wall_time_s));
        let watch = Stopwatch::start(clock, cpu0, wall0);

        let reason = loop {
            if let Some(r) = self.stopped {
                break r;
            }
            let result = if self.next_step == 0 {
                self.initialize(objective, log, &watch)
            } else {
                self.step(objective, pool.as_ref(), log, &watch).map(|_| ())
            };
            match result {
                Ok(()) => {}
                Err(BboError::Objective(e)) if e.is_fatal() => {
                    self.stopped = Some(StopReason::ObjectiveUnavailable);
                    self.finish(log)?;
                    return Err(BboError::Objective(e));
                }
                Err(e) => return Err(e),
            }
            if self.budget_left() == 0 {
                self.stopped = Some(StopReason::Budget);
            } else if self.d.is_empty() || self.idle_steps >= MAX_IDLE_STEPS {
                self.stopped = Some(StopReason::Exhausted);
            }
            checkpoint(self)?;
        };
        self.finish(log)?;
        Ok(reason)
    }

    fn finish<W: Write>(&self, log: &mut RunLogWriter<W>) -> Result<(), BboError> {
        let reason = self.stopped.unwrap_or(StopReason::ObjectiveUnavailable);
        let footer = LogFooter {
            complete: reason != StopReason::ObjectiveUnavailable,
            stop_reason: reason,
            calls: self.calls,
            best_smiles: self.best().map(|b| b.smiles().to_string()),
            best_value: self.best().map(|b| b.value),
        };
        log.finish(footer)?;
        Ok(())
    }

    /// Evaluates the initial molecules (step 0).
    pub fn initialize<O, W>(
        &mut self,
        objective: &O,
        log: &mut RunLogWriter<W>,
        watch: &Stopwatch,
    ) -> Result<(), BboError>
    where
        O: Objective + ?Sized,
        W: Write,
    {
        let seeds = self.cfg.parse_seed_molecules().map_err(BboError::InvalidConfig)?;
        for m in seeds {
            if self.budget_left() == 0 {
                break;
            }
            let outcome = evaluate(objective, &m)?;
            self.record(m, outcome, 0, 0, log, watch)?;
        }
        self.next_step = 1;
        Ok(())
    }

    /// Fits the surrogate, runs the EA restarts and evaluates their picks.
    pub fn step<O, W>(
        &mut self,
        objective: &O,
        pool: Option<&rayon::ThreadPool>,
        log: &mut RunLogWriter<W>,
        watch: &Stopwatch,
    ) -> Result<StepReport, BboError>
    where
        O: Objective + ?Sized,
        W: Write,
    {
        let step = self.next_step;
        let (picks, surrogate_calls, empty_restarts) = self.propose(step, pool)?;
        let picks: Vec<(u64, Molecule)> = picks
            .into_iter()
            .take(self.budget_left() as usize)
            .collect();

        match pool {
            None => {
                for (restart, m) in &picks {
                    let outcome = evaluate(objective, m)?;
                    self.record(m.clone(), outcome, step, *restart, log, watch)?;
                }
            }
            Some(pool) => {
                let outcomes: Vec<Result<Outcome, BboError>> =
                    pool.install(|| picks.par_iter().map(|(_, m)| evaluate(objective, m)).collect());
                for ((restart, m), outcome) in picks.iter().zip(outcomes) {
                    self.record(m.clone(), outcome?, step, *restart, log, watch)?;
                }
            }
        }

        if picks.is_empty() {
            self.idle_steps += 1;
        } else {
            self.idle_steps = 0;
        }
        self.next_step += 1;
        Ok(StepReport {
            step,
            picks,
            surrogate_calls,
            empty_restarts,
        })
    }

    /// One candidate per restart: the highest-EI molecule in its trace that
    /// is neither known nor picked by an earlier restart.
    fn propose(
        &self,
        step: u64,
        pool: Option<&rayon::ThreadPool>,
    ) -> Result<Proposal, BboError> {
        let dim = self.dictionary.len();
        let inputs: Vec<Vec<f64>> = self.d.iter().map(|e| e.descriptor.to_features(dim)).collect();
        let targets: Vec<f64> = self.d.iter().map(|e| e.value).collect();
        let mut fit_rng = stream(self.cfg.master_seed, step, 0, STREAM_FIT);
        let model = GpModel::fit(&inputs, &targets, &self.cfg.kernel, &mut fit_rng)?;
        let f_max = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);

        let restart = |r: usize| -> (Vec<Evaluated>, u64) {
            let mut rng = stream(self.cfg.master_seed, step, r as u64 + 1, STREAM_RESTART);
            let initial = select_initial_population(&self.d, self.cfg.init_pop_size, &mut rng);
            let fitness = ei_fitness(&model, &self.dictionary, &self.known, f_max, self.cfg.xi);
            let trace = ea_maximize(|m| Ok(fitness.score(m)), &initial, &self.cfg.ea, &self.known, &mut rng)
                .map(|o| o.trace)
                .unwrap_or_default();
            (trace, fitness.surrogate_calls())
        };
        let traces: Vec<(Vec<Evaluated>, u64)> = match pool {
            None => (0..self.cfg.restarts).map(restart).collect(),
            Some(pool) => pool.install(|| (0..self.cfg.restarts).into_par_iter().map(restart).collect()),
        };

        let mut chosen: HashSet<CanonicalKey> = HashSet::new();
        let mut picks = Vec::new();
        let mut calls = 0;
        let mut empty = 0;
        for (r, (trace, n)) in traces.into_iter().enumerate() {
            calls += n;
            let mut best: Option<Evaluated> = None;
            for e in trace {
                if self.known.contains(&e.molecule.key) || chosen.contains(&e.molecule.key) {
                    continue;
                }
                if best.as_ref().is_none_or(|b| e.fitness > b.fitness) {
                    best = Some(e);
                }
            }
            match best {
                Some(b) => {
                    chosen.insert(b.molecule.key.clone());
                    picks.push((r as u64, b.molecule));
                }
                None => empty += 1,
            }
        }
        Ok((picks, calls, empty))
    }

    fn record<W: Write>(
        &mut self,
        m: Molecule,
        outcome: Outcome,
        step: u64,
        restart: u64,
        log: &mut RunLogWriter<W>,
        watch: &Stopwatch,
    ) -> Result<(), BboError> {
        // Stored in canonical atom order so that a run rebuilt from SMILES
        // mutates exactly the same graphs.
        let m = canonical_form(m, self.cfg.ea.heavy_atom_limit)?;
        self.calls += 1;
        let call_index = self.calls;
        let (cpu, wall) = watch.read(call_index);
        self.known.insert(m.key.clone());
        let (value, error) = match outcome {
            Outcome::Value(v) => {
                let descriptor = match self.dictionary.encode(&m.graph) {
                    Ok(v) => v,
                    // A full dictionary keeps its columns; new shingles are dropped.
                    Err(_) => self.dictionary.encode_frozen(&m.graph).vector,
                };
                self.d.push(EvaluatedMolecule {
                    molecule: m.clone(),
                    descriptor,
                    value: v,
                    step,
                    restart,
                    call_index,
                    wall_time_s: wall,
                });
                if self.best().is_none_or(|b| v > b.value) {
                    self.best = Some(self.d.len() - 1);
                }
                (Some(v), None)
            }
            Outcome::Failed(msg) => {
                self.failed.push(m.key.clone());
                (None, Some(msg))
            }
        };
        log.push(CallRecord {
            call_index,
            step,
            restart,
            smiles: m.smiles().to_string(),
            value,
            best_so_far: self.best().map(|b| b.value),
            cpu_time_s: cpu,
            wall_time_s: wall,
            error,
        })?;
        Ok(())
    }

    pub fn state(&self) -> BboState {
        BboState {
            schema_version: STATE_SCHEMA_VERSION,
            config: self.cfg.clone(),
            dictionary: self.dictionary.keys().to_vec(),
            evaluated: self
                .d
                .iter()
                .map(|e| StoredRecord {
                    smiles: e.smiles().to_string(),
                    value: e.value,
                    step: e.step,
                    restart: e.restart,
                    call_index: e.call_index,
                    wall_time_s: e.wall_time_s,
                })
                .collect(),
            failed: self.failed.clone(),
            calls: self.calls,
            next_step: self.next_step,
            idle_steps: self.idle_steps,
            stopped: self.stopped,
        }
    }

    /// Rebuilds a run from a checkpoint, re-deriving every descriptor.
    pub fn from_state(state: BboState) -> Result<Self, BboError> {
        if state.schema_version != STATE_SCHEMA_VERSION {
            return Err(BboError::State(format!(
                "unsupported state schema version {}",
                state.schema_version
            )));
        }
        let mut run = BboRun::new(state.config)?;
        let limit = run.cfg.ea.heavy_atom_limit;
        for rec in &state.evaluated {
            let m = Molecule::parse(&rec.smiles, limit)
                .map_err(|e| BboError::State(format!("{}: {e}", rec.smiles)))?;
            if m.smiles() != rec.smiles {
                return Err(BboError::State(format!("{} is not canonical", rec.smiles)));
            }
            let descriptor = match run.dictionary.encode(&m.graph) {
                Ok(v) => v,
                Err(_) => run.dictionary.encode_frozen(&m.graph).vector,
            };
            run.known.insert(m.key.clone());
            run.d.push(EvaluatedMolecule {
                molecule: m,
                descriptor,
                value: rec.value,
                step: rec.step,
                restart: rec.restart,
                call_index: rec.call_index,
                wall_time_s: rec.wall_time_s,
            });
            if run.best().is_none_or(|b| rec.value > b.value) {
                run.best = Some(run.d.len() - 1);
            }
        }
        if run.dictionary.keys() != state.dictionary.as_slice() {
            return Err(BboError::State("shingle dictionary does not match the records".into()));
        }
        if state.calls != (state.evaluated.len() + state.failed.len()) as u64 {
            return Err(BboError::State("call count does not match the records".into()));
        }
        run.known.extend(state.failed.iter().cloned());
        run.failed = state.failed;
        run.calls = state.calls;
        run.next_step = state.next_step;
        run.idle_steps = state.idle_steps;
        run.stopped = state.stopped;
        Ok(run)
    }
}

fn canonical_form(m: Molecule, limit: usize) -> Result<Molecule, BboError> {
    let c = Molecule::parse(m.smiles(), limit).map_err(|e| BboError::State(e.to_string()))?;
    debug_assert_eq!(c.key, m.key);
    Ok(c)
}

fn evaluate<O: Objective + ?Sized>(objective: &O, m: &Molecule) -> Result<Outcome, BboError> {
    match objective.evaluate(&m.graph) {
        Ok(v) if v.is_finite() => Ok(Outcome::Value(v)),
        Ok(v) => Ok(Outcome::Failed(format!("non-finite value {v}"))),
        Err(e) if e.is_fatal() => Err(BboError::Objective(e)),
        Err(e) => Ok(Outcome::Failed(e.to_string())),
    }
}

impl From<ObjectiveError> for BboError {
    fn from(e: ObjectiveError) -> Self {
        BboError::Objective(e)
    }
}
