//! `phaselock`: train, recall, batch, analyze and fit from the command line.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! failure.

mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use phaselock_core::Error;

#[derive(Parser)]
#[command(name = "phaselock", version, about = "Phase-coupled oscillator associative memory experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from random weights; writes trace.csv, weights.json, summary.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Recall with fixed initial weights over the recall blocks of the schedule.
    Recall {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Many seeded training runs, aggregated; writes aggregate.csv and aggregate.svg.
    Batch {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Fixed-point stability or Fisher identifiability of saved weights.
    Analyze {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long, value_enum)]
        mode: AnalyzeMode,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit couplings and frequencies to a voltage recording.
    Fit {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AnalyzeMode {
    Stability,
    Fisher,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Precondition(_) => CliError::Usage(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { config, out, seed } => commands::train(&config, &out, seed),
        Command::Recall {
            config,
            weights,
            out,
            seed,
        } => commands::recall(&config, &weights, &out, seed),
        Command::Batch {
            config,
            out,
            seed,
            workers,
        } => commands::batch(&config, &out, seed, workers),
        Command::Analyze {
            weights,
            mode,
            out,
            config,
        } => match mode {
            AnalyzeMode::Stability => commands::analyze_stability(&weights, config.as_deref(), &out),
            AnalyzeMode::Fisher => commands::analyze_fisher(&weights, config.as_deref(), &out),
        },
        Command::Fit { trace, out, config } => commands::fit(&trace, config.as_deref(), &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
