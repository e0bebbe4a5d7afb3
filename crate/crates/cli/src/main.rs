//! `gdoa`: gridless DOA estimation from the command line.

mod args;
mod commands;
mod svg;

use clap::{Parser, Subcommand};
use commands::{AnalyzeArgs, BenchmarkArgs, EstimateArgs, SimulateArgs};
use gridless_doa::DoaError;
use std::process::ExitCode;

/// Exit status for malformed input or invalid arguments.
const EXIT_PARSE: u8 = 2;
/// Exit status for numerical or solver failures.
const EXIT_SOLVER: u8 = 3;
/// Exit status for file-system errors.
const EXIT_IO: u8 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "gdoa",
    version,
    about = "Gridless single-snapshot DOA estimation for planar arrays"
)]
struct Cli {
    /// Increase log verbosity (-v, -vv).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// DFT length, per-sensor bandwidths and Fourier spectra of an array.
    AnalyzeGeometry(AnalyzeArgs),
    /// Estimate DOAs and amplitudes from one snapshot.
    Estimate(EstimateArgs),
    /// Synthesize a snapshot from a scenario.
    Simulate(SimulateArgs),
    /// Monte Carlo RMSE over SNR and noise-bound multipliers.
    Benchmark(BenchmarkArgs),
}

fn exit_code(e: &DoaError) -> u8 {
    match e.root() {
        DoaError::Parse(_) | DoaError::InvalidArgument(_) | DoaError::DimensionMismatch(_) => {
            EXIT_PARSE
        }
        DoaError::Io(_) => EXIT_IO,
        _ => EXIT_SOLVER,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    let result = match &cli.command {
        Command::AnalyzeGeometry(a) => commands::analyze_geometry(a),
        Command::Estimate(a) => commands::estimate_cmd(a).map(|_| ()),
        Command::Simulate(a) => commands::simulate_cmd(a).map(|_| ()),
        Command::Benchmark(a) => commands::benchmark_cmd(a).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
