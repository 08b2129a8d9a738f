mod config;
mod data;
mod report;
mod run;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "molbbo", version, about = "Surrogate-assisted optimization over small molecules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the surrogate-assisted optimizer.
    RunBbo(run::RunArgs),
    /// Run the evolutionary algorithm directly on the objective.
    RunEa(run::RunArgs),
    /// ECDF and ERT tables from run logs.
    Report(report::ReportArgs),
    /// Learning curve of the surrogate on a labelled dataset.
    SurrogateEval(data::EvalArgs),
    /// Sample random molecules and label them with an objective.
    #[command(alias = "molecule-generator")]
    GenerateMolecules(data::GenerateArgs),
}

/// Exit status 2 for bad configuration or input, 3 when the objective
/// fails, 1 for anything else.
#[derive(Debug)]
pub enum CliError {
    Input(String),
    Objective(String),
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Objective(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) | CliError::Objective(m) | CliError::Other(m) => f.write_str(m),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

#[derive(Args, Clone, Copy, Debug, Default)]
pub struct Parallelism {
    /// Single-threaded reference mode.
    #[arg(long, conflicts_with = "parallel")]
    sequential: bool,
    /// Worker threads for restarts and evaluations.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    parallel: Option<u32>,
}

impl Parallelism {
    fn threads(&self) -> usize {
        if self.sequential {
            return 1;
        }
        match self.parallel {
            Some(n) => n as usize,
            None => std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

/// Writes `contents` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let mut tmp = PathBuf::from(path);
    tmp.as_mut_os_string().push(".tmp");
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::RunBbo(a) => run::run_bbo(&a),
        Command::RunEa(a) => run::run_ea(&a),
        Command::Report(a) => report::report(&a),
        Command::SurrogateEval(a) => data::surrogate_eval(&a),
        Command::GenerateMolecules(a) => data::generate(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
