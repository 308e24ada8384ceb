//! Experiment runner for distributionally robust LQR regret analysis.
//!
//! Subcommands: `bound-sweep`, `error-percentiles`, `simulate`, `validate`.
//! Exit codes: 0 success, 1 config error, 2 oracle/validation failure,
//! 3 I/O error.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("oracle failure: {0}")]
    Oracle(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Oracle(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "drcontrol",
    version,
    about = "Regret experiments for distributionally robust LQR under moment ambiguity"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration file (TOML, or JSON with a .json extension).
    #[arg(long)]
    config: PathBuf,
    /// Master RNG seed; overrides the config value.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config value.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for rollout generation (0 = one per core).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep the regret upper bound over (alpha, horizon) pairs.
    BoundSweep(CommonArgs),
    /// Per-step percentile bands of the true-vs-worst error process.
    ErrorPercentiles(CommonArgs),
    /// Monte Carlo rollouts, empirical regret and its upper bound.
    Simulate(CommonArgs),
    /// Cross-check closed forms, the dual solver and moment propagation.
    Validate(CommonArgs),
}

fn run(args: &CommonArgs, f: impl Fn(&config::ExperimentConfig, u64, &std::path::Path) -> Result<(), CliError>) -> Result<(), CliError> {
    if args.threads > 0 {
        // Ignore the error if a global pool already exists; results do not
        // depend on thread count.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build_global();
    }
    let cfg = config::load(&args.config)?;
    let seed = args.seed.unwrap_or(cfg.seed);
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    f(&cfg, seed, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::BoundSweep(a) => run(a, commands::bound_sweep),
        Command::ErrorPercentiles(a) => run(a, commands::error_percentiles),
        Command::Simulate(a) => run(a, commands::simulate),
        Command::Validate(a) => run(a, commands::validate),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
