use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

mod commands;
mod config;

#[derive(Debug, Parser)]
#[command(name = "riskscape", version, about = "Landscape analysis for non-convex M-estimators")]
struct Cli {
    /// TOML or JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed given in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 lets the pool decide.
    #[arg(long, global = true, env = "RISKSCAPE_THREADS")]
    threads: Option<usize>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset (binary, or CSV for a .csv output).
    Gen,
    /// Fit a model from one or more starting points.
    Fit,
    /// Locate and classify critical points of an empirical risk.
    Landscape,
    /// Run a preset or configured experiment and write its curves.
    Experiment {
        /// Preset to run when no config is given.
        #[arg(long)]
        name: Option<String>,
        /// Also bundle the curves into one plot-data file per figure.
        #[arg(long)]
        plotdata: bool,
    },
    /// Evaluate the population risk, gradient and Hessian.
    Oracle,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Run(#[from] riskscape::Error),
    #[error("{failures} of {attempts} instances failed (rate {rate:.3} above the allowed {limit})")]
    Partial {
        failures: usize,
        attempts: usize,
        rate: f64,
        limit: f64,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Run(_) => 1,
            CliError::Partial { .. } => 3,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let threads = cli.threads.unwrap_or(0);
    match riskscape::par::with_threads(threads, || commands::dispatch(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("riskscape: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
