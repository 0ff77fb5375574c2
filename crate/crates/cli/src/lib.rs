//! Command-line front end: PACS on user data, simulation cells and their
//! combined reports.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use pacs_core::PacsError;
use thiserror::Error;

pub mod commands;
pub mod config;
pub mod report;
pub mod svg;

pub use commands::{cmd_ate, cmd_report, cmd_select, cmd_simulate};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] PacsError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Report(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pacs", version, about = "Propensity-score adapted covariate selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select covariates on a CSV file and estimate the ATE
    Select(commands::SelectArgs),
    /// Estimate the ATE, with PACS-selected or fixed covariates
    Ate(commands::AteArgs),
    /// Run Monte-Carlo cells and write their tables and charts
    Simulate(commands::SimulateArgs),
    /// Merge simulate output into cross-cell tables and redraw the charts
    Report(commands::ReportArgs),
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Select(a) => cmd_select(a),
        Command::Ate(a) => cmd_ate(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Report(a) => cmd_report(a),
    }
}
