//! `crext`: bracket filtrations, attached discs and sector tests for
//! polynomial generic submanifolds, reported as JSON with CSV plot data.

mod analyze;
mod compare;
mod disc;
mod error;
mod input;
mod report;
mod verdict;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "crext", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Hörmander numbers, leading parts and sector verdicts of a model
    Analyze(analyze::AnalyzeArgs),
    /// η-scan of attached discs along one w-direction
    Disc(disc::DiscArgs),
    /// Threshold, barrier and cone comparison for y = |w|^k + a|w|^{k-p} Re w^p
    Compare(compare::CompareArgs),
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                let _ = e.print();
                return 0;
            }
            _ => {
                let msg = e.to_string();
                let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
                let err = CliError::input("usage", first);
                eprintln!("{}", err.to_json());
                return err.exit_code();
            }
        },
    };
    let result = match &cli.command {
        Command::Analyze(a) => analyze::run(a),
        Command::Disc(a) => disc::run(a),
        Command::Compare(a) => compare::run(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
