//! `romes run <config>` trains and evaluates one model; `romes pareto <config>`
//! sweeps model sizes. Exit codes: 0 success, 2 configuration error,
//! 3 numerical failure, 1 anything else (I/O).

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage} stage failed: {source}")]
    Numerical {
        stage: &'static str,
        #[source]
        source: romes::RomError,
    },
    #[error("output error: {0}")]
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
            CliError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "romes", version = commands::VERSION, about = "Reduced-order model error surrogates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Derive every seed from this value.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Output directory, replacing `output_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Only log warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Offline training, online evaluation, checkpoint and metric tables.
    Run { config: PathBuf },
    /// Accuracy/cost study with Pareto fronts.
    Pareto { config: PathBuf },
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let path = match &cli.command {
        Command::Run { config } | Command::Pareto { config } => config,
    };
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed_override {
        config.override_seeds(seed);
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    match cli.command {
        Command::Run { .. } => {
            let s = commands::run(&config)?;
            log::info!("wrote {} files to {}", s.files.len() + 1, config.output_dir.display());
        }
        Command::Pareto { .. } => {
            let s = commands::pareto(&config)?;
            log::info!("{} Pareto records in {}", s.records.len(), config.output_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        log::LevelFilter::Warn
    } else {
        log::LevelFilter::Info
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
