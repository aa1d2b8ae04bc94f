//! `pqr`: data generation, training, evaluation and experiments for
//! probabilistic quality representation models.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CompareArgs, EncodeArgs, EvalArgs, GenDataArgs, SweepArgs, TrainArgs};

/// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "pqr", version, about = "Blind image quality assessment with probabilistic quality representations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic distorted-image dataset with simulated opinion scores.
    GenData(GenDataArgs),
    /// Train a model on the train split of a manifest and write a checkpoint.
    Train(TrainArgs),
    /// Score a split of a manifest with a checkpoint.
    Eval(EvalArgs),
    /// Sweep beta or M with everything else fixed by a config file.
    Sweep(SweepArgs),
    /// Encode scores as PQR vectors and report the reverse-map fit.
    Encode(EncodeArgs),
    /// Run the PQR and scalar-regression heads on identical splits.
    Compare(CompareArgs),
}

/// An error caused by the invocation itself rather than by its data.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 1;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<pqr_core::Error>() {
            return if e.is_numerical() { 3 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Encode(a) => commands::encode(a),
        Command::Compare(a) => commands::compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
