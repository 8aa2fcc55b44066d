//! Batch entry points for the ehr-fusion pipeline: synthetic data
//! generation, multi-seed training, evaluation and attribution reports.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod io;
pub mod report;
pub mod seeds;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "ehr-fusion", version, about = "Multimodal ICU mortality prediction with attribution reports")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with planted signals.
    GenData(commands::gen_data::GenDataArgs),
    /// Train one model kind over several seeds.
    Train(commands::train::TrainArgs),
    /// Evaluate a checkpoint on one split.
    Eval(commands::eval::EvalArgs),
    /// Integrated gradients over note tokens or Shapley values over variables.
    Attribute(commands::attribute::AttributeArgs),
}

/// Run a parsed command; returns the path of the manifest it wrote.
pub fn run(cli: Cli) -> Result<PathBuf, CliError> {
    match cli.command {
        Command::GenData(a) => commands::gen_data::run(a),
        Command::Train(a) => commands::train::run(a),
        Command::Eval(a) => commands::eval::run(a),
        Command::Attribute(a) => commands::attribute::run(a),
    }
}
