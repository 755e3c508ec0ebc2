//! `mtp`: shift-policy panel analyses and simulation studies.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Invocation;
use crate::config::Command;

#[derive(Parser)]
#[command(name = "mtp", version, about = "Estimate effects of shifting a continuous exposure")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads for slices and replications (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Check the configuration and input header, then exit.
    #[arg(long, global = true)]
    validate_only: bool,
    /// Overrides the config output directory.
    #[arg(long, global = true, value_name = "PATH")]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Run the weekly analysis grid.
    Analyze,
    /// Run a replication study on simulated data.
    Simulate,
    /// Select shift sizes by the density-ratio diagnostic.
    DiagnoseShift,
    /// List screened covariates per index.
    Screen,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let command = match cli.command {
        Sub::Analyze => Command::Analyze,
        Sub::Simulate => Command::Simulate,
        Sub::DiagnoseShift => Command::DiagnoseShift,
        Sub::Screen => Command::Screen,
    };
    let Some(config) = cli.config else {
        eprintln!("configuration error: --config PATH is required");
        return ExitCode::from(2);
    };
    let result = Invocation::prepare(command, &config, cli.seed, cli.jobs, cli.output_dir).and_then(|inv| {
        if cli.validate_only {
            println!("configuration {} is valid", config.display());
            Ok(())
        } else {
            inv.run()
        }
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
