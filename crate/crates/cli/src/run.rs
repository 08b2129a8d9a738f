use std::fs::{self, File, OpenOptions};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Args;
use molbbo::bbo::{run_ea_baseline, BboError, BboRun, BboState, RunOptions};
use molbbo::objective::{Objective, ObjectiveSpec};
use molbbo::runlog::{LogHeader, RunLog, RunLogWriter, StopReason, SCHEMA_VERSION};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::{write_atomic, CliError, Parallelism};

pub const RUN_LOG: &str = "runlog.jsonl";
pub const STATE: &str = "state.json";
pub const SUMMARY: &str = "summary.json";

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config's outDir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides bbo.masterSeed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides bbo.budget.
    #[arg(long)]
    budget: Option<u64>,
    #[command(flatten)]
    parallelism: Parallelism,
    /// Continue from state.json in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct Summary {
    method: String,
    complete: bool,
    stop_reason: StopReason,
    calls_used: u64,
    best_smiles: Option<String>,
    best_value: Option<f64>,
}

fn load_config(args: &RunArgs) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let path = args
        .config
        .as_ref()
        .ok_or_else(|| CliError::Input("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = args.seed {
        cfg.bbo.master_seed = seed;
    }
    if let Some(budget) = args.budget {
        cfg.bbo.budget = budget;
    }
    cfg.validate()?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .ok_or_else(|| CliError::Input("no output directory: pass --out or set outDir".into()))?;
    fs::create_dir_all(&out).map_err(|e| CliError::Input(format!("cannot create {}: {e}", out.display())))?;
    Ok((cfg, out))
}

fn header(method: &str, cfg: &ExperimentConfig) -> LogHeader {
    LogHeader {
        schema_version: SCHEMA_VERSION,
        method: method.into(),
        seed: cfg.bbo.master_seed,
        clock: cfg.clock,
        objective: serde_json::to_value(&cfg.objective).expect("serializable"),
        config: serde_json::to_value(&cfg.bbo).expect("serializable"),
    }
}

fn build_objective(spec: &ObjectiveSpec) -> Result<Box<dyn Objective>, CliError> {
    spec.build().map_err(|e| CliError::Objective(e.to_string()))
}

fn write_summary(out: &Path, log: &RunLog) -> Result<(), CliError> {
    let footer = log.footer.as_ref();
    let summary = Summary {
        method: log.header.method.clone(),
        complete: log.is_complete(),
        stop_reason: footer.map_or(StopReason::ObjectiveUnavailable, |f| f.stop_reason),
        calls_used: log.records.len() as u64,
        best_smiles: footer.and_then(|f| f.best_smiles.clone()),
        best_value: footer.and_then(|f| f.best_value),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("serializable");
    text.push('\n');
    write_atomic(&out.join(SUMMARY), text.as_bytes())?;
    Ok(())
}

fn map_run_error(e: BboError) -> CliError {
    match e {
        BboError::Objective(e) => CliError::Objective(e.to_string()),
        BboError::InvalidConfig(m) => CliError::Input(m),
        e => CliError::Other(e.to_string()),
    }
}

fn open_log(path: &Path, header: LogHeader) -> Result<RunLogWriter<BufWriter<File>>, CliError> {
    let file = File::create(path).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))?;
    Ok(RunLogWriter::new(BufWriter::new(file), header)?)
}

pub fn run_bbo(args: &RunArgs) -> Result<(), CliError> {
    let (mut bbo, mut log, out) = if args.resume {
        resume(args)?
    } else {
        let (cfg, out) = load_config(args)?;
        let log = open_log(&out.join(RUN_LOG), header("bbo", &cfg))?;
        (BboRun::new(cfg.bbo).map_err(map_run_error)?, log, out)
    };
    let spec: ObjectiveSpec = serde_json::from_value(log.log().header.objective.clone())
        .map_err(|e| CliError::Input(format!("objective in log header: {e}")))?;
    let objective = build_objective(&spec)?;
    let options = RunOptions {
        threads: args.parallelism.threads(),
    };
    let state_path = out.join(STATE);
    let result = bbo.run(objective.as_ref(), &options, &mut log, |run| {
        let text = serde_json::to_string(&run.state()).expect("serializable");
        write_atomic(&state_path, text.as_bytes()).map_err(BboError::Io)
    });
    write_summary(&out, log.log())?;
    result.map(|_| ()).map_err(map_run_error)
}

/// Reloads the checkpoint, drops log records written after it and reopens
/// the log for appending.
fn resume(args: &RunArgs) -> Result<(BboRun, RunLogWriter<BufWriter<File>>, PathBuf), CliError> {
    if args.seed.is_some() || args.budget.is_some() || args.config.is_some() {
        return Err(CliError::Input("--resume takes its configuration from the checkpoint".into()));
    }
    let out = args
        .out
        .clone()
        .ok_or_else(|| CliError::Input("--resume needs --out".into()))?;
    let state_path = out.join(STATE);
    let text = fs::read_to_string(&state_path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", state_path.display())))?;
    let state: BboState =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", state_path.display())))?;
    let log_path = out.join(RUN_LOG);
    let mut log = RunLog::read(&log_path).map_err(|e| CliError::Input(format!("{}: {e}", log_path.display())))?;
    if (log.records.len() as u64) < state.calls {
        return Err(CliError::Input("run log is shorter than the checkpoint".into()));
    }
    log.records.truncate(state.calls as usize);
    log.footer = None;
    let run = BboRun::from_state(state).map_err(|e| CliError::Input(e.to_string()))?;
    write_atomic(&log_path, log.to_jsonl().as_bytes())?;
    let file = OpenOptions::new().append(true).open(&log_path)?;
    Ok((run, RunLogWriter::resume(BufWriter::new(file), log), out))
}

pub fn run_ea(args: &RunArgs) -> Result<(), CliError> {
    if args.resume {
        return Err(CliError::Input("the EA baseline cannot be resumed".into()));
    }
    let (cfg, out) = load_config(args)?;
    let objective = build_objective(&cfg.objective)?;
    let mut log = open_log(&out.join(RUN_LOG), header("ea", &cfg))?;
    let result = run_ea_baseline(&cfg.bbo, objective.as_ref(), &mut log);
    write_summary(&out, log.log())?;
    result.map(|_| ()).map_err(map_run_error)
}
