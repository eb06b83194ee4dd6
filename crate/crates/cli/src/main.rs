//! `neutsflow` command-line interface.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data or I/O
//! error, 4 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use neutsflow::{Error, ErrorClass, Result};

use commands::ForecastArgs;
use config::RunConfig;

#[derive(Parser)]
#[command(name = "neutsflow", version, about = "Flow-matching time-series forecasting with a spectral neural operator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat key = value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the `out_dir` key.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides one key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint, epoch log and resolved config.
    Train,
    /// Predict from the tail of a CSV with a trained checkpoint.
    Forecast {
        #[arg(long, value_name = "PATH")]
        checkpoint: PathBuf,
        #[arg(long, value_name = "PATH")]
        input: PathBuf,
        /// ODE steps; defaults to the value stored in the checkpoint.
        #[arg(long)]
        n_steps: Option<usize>,
    },
    /// Train and score the configured variant; writes reports.
    Eval,
    /// Train and score all five variants; writes reports.
    Ablate,
    /// Compare analytic and finite-difference gradients of the flow loss.
    Gradcheck,
    /// Validate a dataset CSV and its splits.
    Ingest,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for kv in &cli.set {
        cfg.apply_override(kv)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.resolve()?;
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var("NEUTSFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::usage(format!("NEUTSFLOW_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::usage(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::Train => commands::train(&cfg),
        Command::Forecast {
            checkpoint,
            input,
            n_steps,
        } => commands::forecast(
            &cfg,
            &ForecastArgs {
                checkpoint,
                input,
                n_steps,
            },
        ),
        Command::Eval => commands::eval(&cfg),
        Command::Ablate => commands::ablate(&cfg),
        Command::Gradcheck => commands::gradcheck(&cfg).map(|_| ()),
        Command::Ingest => commands::ingest(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Usage => 2,
                ErrorClass::Data => 3,
                ErrorClass::Numerical => 4,
            })
        }
    }
}
