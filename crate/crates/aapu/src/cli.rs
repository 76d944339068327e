//! The `aapu` command line.
//!
//! Exit codes: 0 success, 1 some comparison cells failed, 2 configuration or
//! usage error, 3 numeric failure during training.
//!
//! Settings resolve in order: built-in defaults, then `--config`, then flags.
//! Outputs go to `--out-dir`, or to a subdirectory of `$AAPU_OUT_DIR`
//! (default `runs`).

use std::ffi::OsString;
use std::path::PathBuf;

use aapu_core::generate_sine_dataset;
use aapu_core::trainer::Method;
use clap::{Args, Parser, Subcommand};

use crate::compare::{run_compare, CompareRequest, COMPARE_DEFAULT_DIR};
use crate::config::{DataSource, ExperimentConfig};
use crate::dataset::write_dataset;
use crate::error::{Error, Result};
use crate::run::run_training;

pub const OUT_DIR_ENV: &str = "AAPU_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "aapu", version, about = "Positive-unlabeled learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic sine-boundary dataset as CSV files.
    Generate(GenerateArgs),
    /// Train one model and write metrics, histograms and a checkpoint.
    Train(TrainArgs),
    /// Train several methods over several seeds and aggregate test error.
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 100)]
    n_p: usize,
    #[arg(long, default_value_t = 1000)]
    n_u: usize,
    #[arg(long, default_value_t = 10000)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Overrides {
    /// TOML config, or the manifest of an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Dataset directory written by `generate` or laid out the same way.
    #[arg(long)]
    data: Option<PathBuf>,
    /// The dataset CSV files start with a header row.
    #[arg(long)]
    header: bool,
    /// Class prior; defaults to the dataset's.
    #[arg(long)]
    prior: Option<f64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// pn, upu, nnpu, nnpu_plus_p or aapu.
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated epochs, e.g. `10,50,200`.
    #[arg(long, value_delimiter = ',')]
    histogram_epochs: Option<Vec<usize>>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Comma-separated, at least two.
    #[arg(long, value_delimiter = ',', value_parser = parse_method, required = true)]
    methods: Vec<Method>,
    /// `1..5` (inclusive) or a comma-separated list.
    #[arg(long, value_parser = parse_seeds)]
    seeds: Seeds,
    /// Parallel runs; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    Method::parse(s.trim()).map_err(|e| e.to_string())
}

fn parse_seeds(s: &str) -> std::result::Result<Seeds, String> {
    let number = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("`{t}` is not a seed"));
    if let Some((lo, hi)) = s.split_once("..") {
        let (lo, hi) = (number(lo)?, number(hi)?);
        if lo > hi {
            return Err(format!("empty seed range {s}"));
        }
        return Ok(Seeds((lo..=hi).collect()));
    }
    s.split(',').map(number).collect::<std::result::Result<_, _>>().map(Seeds)
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("runs"), PathBuf::from)
}

fn base_config(o: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match &o.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(epochs) = o.epochs {
        cfg.epochs = epochs;
    }
    if let Some(dir) = &o.data {
        cfg.data.source = DataSource::Csv;
        cfg.data.dir = Some(dir.clone());
    }
    if o.header {
        cfg.data.header = true;
    }
    if let Some(prior) = o.prior {
        cfg.risk.prior = Some(prior);
        cfg.data.prior = Some(prior);
    }
    Ok(cfg)
}

fn generate(args: GenerateArgs) -> Result<u8> {
    let data = generate_sine_dataset(args.n_p, args.n_u, args.n_test, args.seed)?;
    let dir = args.out_dir.unwrap_or_else(|| out_root().join(format!("data-seed{}", args.seed)));
    let manifest = write_dataset(&dir, &data, Some(args.seed))?;
    println!("wrote {} (prior {:.4})", dir.display(), manifest.prior);
    Ok(0)
}

fn train(args: TrainArgs) -> Result<u8> {
    let mut cfg = base_config(&args.overrides)?;
    if let Some(method) = args.method {
        cfg.method = method;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(epochs) = args.histogram_epochs {
        cfg.histogram_epochs = epochs;
    }
    let dir = args.out_dir.unwrap_or_else(|| out_root().join(format!("{}-seed{}", cfg.method.name(), cfg.seed)));
    let summary = run_training(&cfg, &dir)?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    match summary.final_test_error() {
        Some(e) => println!("final test error {e:.6} ({} epochs, {})", summary.records.len(), dir.display()),
        None => println!("no epochs run ({})", dir.display()),
    }
    Ok(0)
}

fn compare(args: CompareArgs) -> Result<u8> {
    let base = base_config(&args.overrides)?;
    let jobs = args.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let req = CompareRequest { base, methods: args.methods, seeds: args.seeds.0, jobs };
    let dir = args.out_dir.unwrap_or_else(|| out_root().join(COMPARE_DEFAULT_DIR));
    let report = run_compare(&req, &dir)?;
    print!("{}", report.table());
    let failed = report.failed_cells();
    if failed > 0 {
        for cell in report.cells.iter().filter(|c| c.outcome.is_err()) {
            eprintln!("failed: {} seed {} ({})", cell.method.name(), cell.seed, cell.dir.display());
        }
        return Ok(1);
    }
    Ok(0)
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Train(a) => train(a),
        Command::Compare(a) => compare(a),
    };
    result.unwrap_or_else(|e: Error| {
        eprintln!("error: {e}");
        e.exit_code()
    })
}
