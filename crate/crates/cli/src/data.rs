use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use molbbo::bench::{generate_molecules, learning_curve, read_dataset, write_dataset, write_learning_curve_csv, BenchError};
use molbbo::molgraph::DEFAULT_HEAVY_ATOM_LIMIT;
use molbbo::surrogate::KernelSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KernelChoice {
    DotProduct,
    Rbf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// File of `<smiles>,<value>` lines.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "50,100,500,1000")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, value_enum, default_value = "dot-product")]
    kernel: KernelChoice,
    /// Full kernel specification (JSON); replaces --kernel.
    #[arg(long)]
    kernel_config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_HEAVY_ATOM_LIMIT)]
    max_atoms: usize,
    #[arg(long)]
    out: PathBuf,
}

fn bench_err(e: BenchError) -> CliError {
    match e {
        BenchError::Io(e) => CliError::Other(e.to_string()),
        BenchError::Csv(e) => CliError::Other(e.to_string()),
        e => CliError::Input(e.to_string()),
    }
}

fn kernel_spec(args: &EvalArgs) -> Result<KernelSpec, CliError> {
    let spec = match &args.kernel_config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        }
        None => match args.kernel {
            KernelChoice::DotProduct => KernelSpec::dot_product(),
            KernelChoice::Rbf => KernelSpec::rbf(),
        },
    };
    spec.validate().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(spec)
}

pub fn surrogate_eval(args: &EvalArgs) -> Result<(), CliError> {
    let spec = kernel_spec(args)?;
    let file = File::open(&args.dataset).map_err(|e| CliError::Input(format!("cannot read {}: {e}", args.dataset.display())))?;
    let (data, bad) = read_dataset(BufReader::new(file), args.max_atoms).map_err(bench_err)?;
    for b in &bad {
        eprintln!("{}:{}: skipped: {}", args.dataset.display(), b.line, b.message);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let rows = learning_curve(&data, &args.sizes, args.folds, &spec, &mut rng).map_err(bench_err)?;
    fs::create_dir_all(&args.out).map_err(|e| CliError::Input(format!("cannot create {}: {e}", args.out.display())))?;
    let out = File::create(args.out.join("learning_curve.csv"))?;
    write_learning_curve_csv(BufWriter::new(out), args.folds, &rows).map_err(bench_err)
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Experiment configuration; supplies the objective and mutation settings.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    count: usize,
    /// Longest random walk from methane.
    #[arg(long, default_value_t = 20)]
    max_walk: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset file to write.
    #[arg(long)]
    out: PathBuf,
}

pub fn generate(args: &GenerateArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(&args.config)?;
    cfg.validate()?;
    if args.max_walk == 0 {
        return Err(CliError::Input("--max-walk must be at least 1".into()));
    }
    let objective = cfg.objective.build().map_err(|e| CliError::Objective(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let molecules = generate_molecules(args.count, args.max_walk, &cfg.bbo.ea, &mut rng).map_err(bench_err)?;
    let mut data = Vec::with_capacity(molecules.len());
    for m in molecules {
        let v = objective
            .evaluate(&m.graph)
            .map_err(|e| CliError::Objective(format!("{}: {e}", m.smiles())))?;
        data.push((m, v));
    }
    let out = File::create(&args.out).map_err(|e| CliError::Input(format!("cannot write {}: {e}", args.out.display())))?;
    write_dataset(BufWriter::new(out), &data)?;
    Ok(())
}
