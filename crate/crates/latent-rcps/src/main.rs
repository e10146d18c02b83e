use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use latent_rcps::config::RunConfig;
use latent_rcps::pipeline;
use latent_rcps::Result;

/// Calibrated per-factor uncertainty intervals for a procedural image
/// generator's latent space.
///
/// Exit status: 0 success, 1 invalid configuration, 2 I/O or malformed
/// file, 3 numerical or training failure, 4 infeasible calibration.
#[derive(Parser)]
#[command(name = "latent-rcps", version)]
struct Cli {
    /// TOML run configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the output directory that holds run directories.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the dataset and write train, calibration and validation splits.
    Generate,
    /// Train the quantile encoder on the training split.
    Train,
    /// Choose the interval scale on the calibration split.
    Calibrate,
    /// Held-out risk and set size by difficulty level.
    Evaluate,
    /// Repeated 50-50 calibrate/evaluate trials on a fresh pool.
    Coverage,
    /// Render interval endpoints for one validation sample.
    Visualize,
    /// Retrain with reconstruction weights 0, 1 and 10 and compare.
    Ablate,
    /// Print the effective configuration.
    ShowConfig,
}

fn run(cli: Cli) -> Result<String> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output.dir = out;
    }
    cfg.validate()?;
    match cli.command {
        Command::Generate => pipeline::generate(&cfg),
        Command::Train => pipeline::train(&cfg),
        Command::Calibrate => pipeline::calibrate_cmd(&cfg),
        Command::Evaluate => pipeline::evaluate(&cfg),
        Command::Coverage => pipeline::coverage(&cfg),
        Command::Visualize => pipeline::visualize(&cfg),
        Command::Ablate => pipeline::ablate(&cfg),
        Command::ShowConfig => Ok(cfg.to_toml()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
