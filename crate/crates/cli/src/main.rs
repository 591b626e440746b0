//! `hn3d`: generate synthetic datasets, precompute 3D similarities, train
//! the point encoder with hard-negative weighting, and evaluate.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error,
//! 3 numeric failure.

mod commands;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use hn3d::ExitClass;

#[derive(Parser)]
#[command(
    name = "hn3d",
    version,
    about = "hard-negative-weighted 2D/3D contrastive alignment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with planted category/subtype structure.
    GenSynthetic(commands::GenArgs),
    /// Precompute per-category 3D similarities into a store directory.
    Precompute(commands::PrecomputeArgs),
    /// Train the point encoder against frozen view embeddings.
    Train(commands::TrainArgs),
    /// Evaluate a checkpoint: zero-shot, cross-modal retrieval, or linear probe.
    Eval(commands::EvalArgs),
    /// Sweep the landmark count: regenerate, retrain, and tabulate.
    AblateLandmarks(commands::AblateArgs),
    /// Rank a dataset's objects against a query object by a chosen measure.
    SimRank(commands::SimRankArgs),
    /// Validate a dataset against its manifest.
    Validate(commands::ValidateArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };

    commands::init_thread_pool();

    let result = match cli.command {
        Command::GenSynthetic(args) => commands::gen_synthetic(args),
        Command::Precompute(args) => commands::precompute(args),
        Command::Train(args) => commands::train(args),
        Command::Eval(args) => commands::eval(args),
        Command::AblateLandmarks(args) => commands::ablate(args),
        Command::SimRank(args) => commands::sim_rank(args),
        Command::Validate(args) => commands::validate(args),
    };

    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.exit_class() {
                ExitClass::Usage => 1,
                ExitClass::Data => 2,
                ExitClass::Numeric => 3,
            };
            std::process::exit(code);
        }
    }
}
