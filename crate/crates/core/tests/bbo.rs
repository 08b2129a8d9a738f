use std::collections::HashSet;
use std::sync::atomic::{AtomicU64, Ordering};

use molbbo::bbo::{run_ea_baseline, BboConfig, BboRun, BboState, RunOptions};
use molbbo::molgraph::{MolecularGraph, Molecule};
use molbbo::objective::{AtomCount, LinearShingles, Objective, ObjectiveError};
use molbbo::runlog::{Clock, LogHeader, RunLog, RunLogWriter, StopReason, SCHEMA_VERSION};
use molbbo::shingles::ShingleDictionary;

fn header(method: &str) -> LogHeader {
    LogHeader {
        schema_version: SCHEMA_VERSION,
        method: method.into(),
        seed: 0,
        clock: Clock::Logical,
        objective: serde_json::Value::Null,
        config: serde_json::Value::Null,
    }
}

fn small(budget: u64, seed: u64) -> BboConfig {
    BboConfig {
        budget,
        master_seed: seed,
        ..BboConfig::default()
    }
}

fn run(cfg: BboConfig, objective: &dyn Objective, threads: usize) -> (BboRun, RunLog) {
    let mut r = BboRun::new(cfg).unwrap();
    let mut log = RunLogWriter::in_memory(header("bbo"));
    r.run(objective, &RunOptions { threads }, &mut log, |_| Ok(())).unwrap();
    (r, log.into_log())
}

/// Counts every call that reaches the objective.
struct Counting<O> {
    inner: O,
    calls: AtomicU64,
}

impl<O: Objective> Objective for Counting<O> {
    fn evaluate(&self, g: &MolecularGraph) -> Result<f64, ObjectiveError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.evaluate(g)
    }
}

#[test]
fn budget_one_only_evaluates_methane() {
    let (r, log) = run(small(1, 0), &AtomCount, 1);
    assert_eq!(log.records.len(), 1);
    assert_eq!(log.records[0].smiles, "C");
    assert_eq!(r.next_step(), 1);
    assert_eq!(log.footer.unwrap().stop_reason, StopReason::Budget);
}

#[test]
fn budget_is_spent_exactly_without_repeats() {
    let obj = Counting {
        inner: LinearShingles::new(7),
        calls: AtomicU64::new(0),
    };
    let (r, log) = run(small(120, 3), &obj, 1);
    assert_eq!(obj.calls.load(Ordering::SeqCst), 120);
    assert_eq!(log.records.len(), 120);
    assert_eq!(r.dataset().len(), 120);
    let keys: HashSet<&str> = log.records.iter().map(|c| c.smiles.as_str()).collect();
    assert_eq!(keys.len(), 120);
    for w in log.records.windows(2) {
        assert!(w[1].best_so_far >= w[0].best_so_far);
        assert!(w[1].step >= w[0].step);
    }
    // At most one pick per restart per step.
    let steps: HashSet<u64> = log.records.iter().map(|c| c.step).collect();
    for s in steps {
        assert!(log.records.iter().filter(|c| c.step == s).count() <= 10);
    }
}

#[test]
fn descriptors_re_encode_from_smiles() {
    let (r, _) = run(small(60, 1), &LinearShingles::new(2), 1);
    let dict = r.dictionary();
    for e in r.dataset() {
        let g = Molecule::parse(e.smiles(), 9).unwrap();
        let enc = dict.encode_frozen(&g.graph);
        assert_eq!(enc.unseen, 0);
        assert_eq!(enc.vector, e.descriptor);
    }
    let mut fresh = ShingleDictionary::default();
    for e in r.dataset() {
        fresh.encode(&e.molecule.graph).unwrap();
    }
    assert_eq!(fresh.keys(), dict.keys());
}

#[test]
fn first_step_restarts_start_from_methane() {
    let mut r = BboRun::new(small(11, 0)).unwrap();
    let mut log = RunLogWriter::in_memory(header("bbo"));
    r.run(&AtomCount, &RunOptions::default(), &mut log, |_| Ok(())).unwrap();
    let log = log.into_log();
    // Every step-1 pick is one or two mutations away from methane.
    for c in log.records.iter().filter(|c| c.step == 1) {
        let m = Molecule::parse(&c.smiles, 9).unwrap();
        assert!(m.graph.atom_count() <= 3, "{}", c.smiles);
    }
}

#[test]
fn sequential_and_parallel_logs_match() {
    let (_, a) = run(small(80, 9), &LinearShingles::new(1), 1);
    let (_, b) = run(small(80, 9), &LinearShingles::new(1), 3);
    let (_, c) = run(small(80, 9), &LinearShingles::new(1), 1);
    assert_eq!(a.to_jsonl(), b.to_jsonl());
    assert_eq!(a.to_jsonl(), c.to_jsonl());
    let (_, d) = run(small(80, 10), &LinearShingles::new(1), 1);
    assert_ne!(a.to_jsonl(), d.to_jsonl());
}

#[test]
fn resume_from_checkpoint_is_exact() {
    let cfg = small(70, 4);
    let obj = LinearShingles::new(5);
    let (_, full) = run(cfg.clone(), &obj, 1);

    // Stop after the third checkpoint by failing the callback.
    let mut r = BboRun::new(cfg).unwrap();
    let mut log = RunLogWriter::in_memory(header("bbo"));
    let mut saved: Option<BboState> = None;
    let mut seen = 0;
    let err = r.run(&obj, &RunOptions::default(), &mut log, |run| {
        seen += 1;
        saved = Some(run.state());
        if seen == 3 {
            Err(molbbo::bbo::BboError::State("stop".into()))
        } else {
            Ok(())
        }
    });
    assert!(err.is_err());
    let state = saved.unwrap();
    let json = serde_json::to_string(&state).unwrap();
    let state: BboState = serde_json::from_str(&json).unwrap();
    let mut partial = log.into_log();
    partial.records.truncate(state.calls as usize);

    let mut resumed = BboRun::from_state(state).unwrap();
    let mut log = RunLogWriter::resume(std::io::sink(), partial);
    resumed.run(&obj, &RunOptions::default(), &mut log, |_| Ok(())).unwrap();
    assert_eq!(log.into_log().to_jsonl(), full.to_jsonl());
}

#[test]
fn objective_failures_are_logged_and_counted() {
    struct RejectsNitrogen;
    impl Objective for RejectsNitrogen {
        fn evaluate(&self, g: &MolecularGraph) -> Result<f64, ObjectiveError> {
            if g.atoms().iter().any(|a| a.symbol() == 'N') {
                Err(ObjectiveError::Failed("no nitrogen".into()))
            } else {
                Ok(g.atom_count() as f64)
            }
        }
    }
    let (r, log) = run(small(60, 2), &RejectsNitrogen, 1);
    let failed = log.records.iter().filter(|c| c.value.is_none()).count();
    assert_eq!(log.records.len(), 60);
    assert_eq!(r.dataset().len() + failed, 60);
    assert!(log.records.iter().filter(|c| c.value.is_none()).all(|c| c.error.is_some()));
    let keys: HashSet<&str> = log.records.iter().map(|c| c.smiles.as_str()).collect();
    assert_eq!(keys.len(), 60);
}

#[test]
fn unavailable_objective_aborts_with_incomplete_log() {
    struct Gone;
    impl Objective for Gone {
        fn evaluate(&self, _: &MolecularGraph) -> Result<f64, ObjectiveError> {
            Err(ObjectiveError::Unavailable("down".into()))
        }
    }
    let mut r = BboRun::new(small(10, 0)).unwrap();
    let mut log = RunLogWriter::in_memory(header("bbo"));
    assert!(r.run(&Gone, &RunOptions::default(), &mut log, |_| Ok(())).is_err());
    let log = log.into_log();
    assert!(!log.is_complete());
    assert_eq!(log.footer.unwrap().stop_reason, StopReason::ObjectiveUnavailable);
}

#[test]
fn tiny_search_space_stops_as_exhausted() {
    let mut cfg = small(1000, 0);
    cfg.ea.heavy_atom_limit = 2;
    let (r, log) = run(cfg, &AtomCount, 1);
    assert_eq!(r.stopped(), Some(StopReason::Exhausted));
    // C, N, O, F singletons are reachable only by substitution from methane;
    // every 1–2 atom molecule over C/N/O/F is small.
    assert!(log.records.len() < 30);
}

#[test]
fn ea_baseline_reaches_atom_cap() {
    let mut log = RunLogWriter::in_memory(header("ea"));
    let reason = run_ea_baseline(&small(200, 0), &AtomCount, &mut log).unwrap();
    assert_eq!(reason, StopReason::Budget);
    let log = log.into_log();
    assert_eq!(log.records.len(), 200);
    assert_eq!(log.final_best(), Some(9.0));
    let keys: HashSet<&str> = log.records.iter().map(|c| c.smiles.as_str()).collect();
    assert_eq!(keys.len(), 200);
}

#[test]
fn bbo_reaches_atom_cap_within_fifty_calls() {
    let (r, _) = run(small(50, 0), &AtomCount, 1);
    assert_eq!(r.best().unwrap().value, 9.0);
}

