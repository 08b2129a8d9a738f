use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Args;
use molbbo::bench::{check_same_objective, ecdf_unchecked, ert_summary_unchecked, write_ecdf_csv, write_ert_csv, Axis, BenchError, TargetGrid};
use molbbo::runlog::RunLog;

use crate::CliError;

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Glob pattern(s) selecting run logs.
    #[arg(long = "logs", required = true, num_args = 1..)]
    logs: Vec<String>,
    /// Target grid as lo:hi:step.
    #[arg(long, default_value = "-10:-1:0.01", value_parser = parse_grid)]
    grid: TargetGrid,
    /// Comma-separated ERT targets; defaults to whole numbers within the grid.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    targets: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Accept logs from different objectives.
    #[arg(long)]
    allow_mixed: bool,
}

fn parse_grid(s: &str) -> Result<TargetGrid, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, step] = parts.as_slice() else {
        return Err("expected lo:hi:step".into());
    };
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("not a number: {t}"));
    TargetGrid::new(num(lo)?, num(hi)?, num(step)?).map_err(|e| e.to_string())
}

fn default_targets(grid: &TargetGrid) -> Vec<f64> {
    let mut t = grid.lo.ceil();
    let mut out = Vec::new();
    while t <= grid.hi {
        out.push(t);
        t += 1.0;
    }
    out
}

fn bench_err(e: BenchError) -> CliError {
    match e {
        BenchError::Io(e) => CliError::Other(e.to_string()),
        e => CliError::Input(e.to_string()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))
}

fn collect_paths(patterns: &[String]) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = Vec::new();
    for p in patterns {
        let entries = glob::glob(p).map_err(|e| CliError::Input(format!("bad pattern {p:?}: {e}")))?;
        for entry in entries {
            paths.push(entry.map_err(|e| CliError::Other(e.to_string()))?);
        }
    }
    paths.sort();
    paths.dedup();
    if paths.is_empty() {
        return Err(CliError::Input(format!("no run logs match {}", patterns.join(" "))));
    }
    Ok(paths)
}

/// With a single method the curves go to `ecdf_calls.csv` and
/// `ecdf_cpu.csv`; with several each method gets its own suffixed pair.
pub fn report(args: &ReportArgs) -> Result<(), CliError> {
    let paths = collect_paths(&args.logs)?;
    let mut logs = Vec::with_capacity(paths.len());
    for p in &paths {
        logs.push(RunLog::read(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?);
    }
    if !args.allow_mixed {
        check_same_objective(&logs).map_err(bench_err)?;
    }
    let mut by_method: BTreeMap<String, Vec<RunLog>> = BTreeMap::new();
    for log in logs {
        by_method.entry(log.header.method.clone()).or_default().push(log);
    }
    let targets = if args.targets.is_empty() {
        default_targets(&args.grid)
    } else {
        args.targets.clone()
    };
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(CliError::Input("targets must be finite".into()));
    }

    fs::create_dir_all(&args.out).map_err(|e| CliError::Input(format!("cannot create {}: {e}", args.out.display())))?;
    let single = by_method.len() == 1;
    let mut ert_rows = Vec::new();
    for (method, logs) in &by_method {
        for (axis, stem) in [(Axis::Calls, "ecdf_calls"), (Axis::CpuTime, "ecdf_cpu")] {
            let name = if single { format!("{stem}.csv") } else { format!("{stem}_{method}.csv") };
            let curve = ecdf_unchecked(logs, &args.grid, axis).map_err(bench_err)?;
            write_ecdf_csv(create(&args.out.join(name))?, &curve).map_err(bench_err)?;
        }
        for &t in &targets {
            let s = ert_summary_unchecked(logs, t, Axis::Calls).map_err(bench_err)?;
            ert_rows.push((method.clone(), t, s));
        }
    }
    write_ert_csv(create(&args.out.join("ert.csv"))?, &ert_rows).map_err(bench_err)
}
