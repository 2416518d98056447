//! `failnet`: generate corpora, train, predict, evaluate, compare and
//! self-check the failure-case classifiers.
//!
//! Exit status is 0 on success, 2 for invalid flags or inputs and 1 for
//! anything else.

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod manifest;
mod options;

/// A problem with the user's flags, config file or input data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[macro_export]
macro_rules! usage {
    ($($arg:tt)*) => {
        anyhow::Error::new($crate::UsageError(format!($($arg)*)))
    };
}

#[derive(Parser)]
#[command(name = "failnet", version, about = "Hierarchical failure-case classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labelled corpus.
    Synth(commands::SynthArgs),
    /// Train one model and write its checkpoint.
    Train(commands::TrainArgs),
    /// Classify texts with a checkpoint; JSON lines on stdout.
    Predict(commands::PredictArgs),
    /// Repeated-run evaluation on a fixed split.
    Evaluate(commands::EvaluateArgs),
    /// Tabulate evaluation reports side by side.
    Compare(commands::CompareArgs),
    /// Gradient checks and the TF-IDF oracle.
    Selfcheck(commands::SelfcheckArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<failnet::Error>() {
        Some(e) if e.is_usage() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Compare(a) => commands::compare(a),
        Command::Selfcheck(a) => commands::selfcheck(a),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
