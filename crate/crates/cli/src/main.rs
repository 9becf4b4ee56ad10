use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;

use commands::Model;
use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "thinrod", version, about = "Thin curved elastic rods: section constants, limit models, decomposition and Gamma checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads for the data-parallel kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Section constants and torsion function.
    Section,
    /// Solve one of the one-dimensional models.
    Solve {
        #[arg(long, value_enum)]
        model: Model,
    },
    /// Split a sampled deformation into elementary part and warping.
    Decompose,
    /// Gamma-convergence sweep over the configured deltas.
    Gamma,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::config("--threads must be positive"));
        }
        #[cfg(feature = "parallel")]
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    }
    let path = cli.config.ok_or_else(|| CliError::config("--config PATH is required"))?;
    let cfg = RunConfig::load(&path)?;
    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::io(&cli.out, e))?;
    match cli.command {
        Command::Section => commands::section(&cfg, &cli.out),
        Command::Solve { model } => commands::solve(&cfg, model, &cli.out),
        Command::Decompose => commands::decompose_cmd(&cfg, &cli.out),
        Command::Gamma => commands::gamma(&cfg, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
