//! `fedstone`: grid search, robustness validation, corruption and training
//! runs over the synthetic two-hospital task.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedstone_core::Error;

#[derive(Parser)]
#[command(name = "fedstone", version, about = "Federated averaging simulator with a corruption-robustness harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's `output_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Grid search over local epochs and rounds on clean two-client data.
    Lpo {
        #[command(flatten)]
        run: RunArgs,
        /// Sweep the full 10x10 grid instead of the configured one.
        #[arg(long)]
        grid_full: bool,
    },
    /// Four-client robustness run at the optimum of a grid-search manifest.
    Frv {
        #[command(flatten)]
        run: RunArgs,
        /// Run manifest written by `fedstone lpo`.
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Corrupts the samples of a dataset manifest.
    Corrupt {
        /// Dataset manifest to corrupt.
        #[arg(long, required_unless_present = "print_tables")]
        manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "corrupted")]
        out: PathBuf,
        /// Pins every sample to this severity (1..=5); also the contact-sheet severity.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
        severity: Option<u8>,
        /// Also write a contact sheet of the first sample under every kind.
        #[arg(long)]
        emit_grid: bool,
        /// Print the severity tables and exit.
        #[arg(long)]
        print_tables: bool,
    },
    /// A single federated or centralized training run.
    Train {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Evaluates a checkpoint on the union of the configured clients' test splits.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Corrupt the test samples at this severity before evaluating.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=5))]
        severity: Option<u8>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::Provenance(_) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Lpo { run, grid_full } => commands::lpo(&run, grid_full),
        Command::Frv { run, manifest } => commands::frv(&run, &manifest),
        Command::Corrupt {
            manifest,
            seed,
            out,
            severity,
            emit_grid,
            print_tables,
        } => commands::corrupt(manifest.as_deref(), seed, &out, severity, emit_grid, print_tables),
        Command::Train { run } => commands::train(&run),
        Command::Eval {
            run,
            checkpoint,
            severity,
        } => commands::eval(&run, &checkpoint, severity),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
