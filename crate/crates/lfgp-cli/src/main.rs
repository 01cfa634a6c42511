//! `lfgp` — dynamic covariance estimation with a latent factor Gaussian
//! process model: sliding-window preprocessing, Gibbs fitting, horseshoe
//! factor extension, synthetic benchmarks, baselines, and separation
//! scoring. One subcommand per pipeline stage; all outputs are CSV plus a
//! binary chain container, each stamped with the master seed and config
//! hash.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lfgp_cli::commands;
use lfgp_cli::config::RunConfig;
use lfgp_cli::error::{CliError, Result};

#[derive(Parser)]
#[command(name = "lfgp", version, about = "Latent factor GP dynamic covariance modeling")]
struct Cli {
    /// Path to the TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker thread count (defaults to the core count).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Tapered sliding-window estimation only: trials → log-covariance CSV.
    Estimate,
    /// Full factor-model fit: chain, reconstructions, trajectories.
    Fit,
    /// Add one factor on the residuals of an existing chain (horseshoe).
    Addfactor,
    /// Generate synthetic trials from scenario dynamics.
    Simulate,
    /// Posterior-contraction and method-comparison tables.
    Bench,
    /// Two-condition separation runs on synthetic data.
    Separate,
    /// SW-PCA and HMM baselines on a data directory.
    Baseline,
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        // Ignore the error if a pool already exists (e.g. repeated calls in
        // tests); thread count never affects results, only wall time.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let cfg = RunConfig::load(config_path, cli.seed)?;
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", cli.out.display())))?;

    match cli.command {
        Command::Estimate => commands::cmd_estimate(&cfg, &cli.out),
        Command::Fit => commands::cmd_fit(&cfg, &cli.out),
        Command::Addfactor => commands::cmd_addfactor(&cfg, &cli.out),
        Command::Simulate => commands::cmd_simulate(&cfg, &cli.out),
        Command::Bench => commands::cmd_bench(&cfg, &cli.out),
        Command::Separate => commands::cmd_separate(&cfg, &cli.out),
        Command::Baseline => commands::cmd_baseline(&cfg, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lfgp: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
