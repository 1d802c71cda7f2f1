//! Command-line harness: run multitasking experiments, check properties on
//! small instances, and turn run directories into plot-ready tables.

mod cmd_check;
mod cmd_report;
mod cmd_run;
mod config;

use clap::{Parser, Subcommand};

/// Exit codes beyond success/usage: counterexamples, exhausted exploration
/// budgets and detected deadlocks are distinguishable for scripting.
pub const EXIT_COUNTEREXAMPLE: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;
pub const EXIT_DEADLOCK: i32 = 5;

#[derive(Parser)]
#[command(name = "coopsim", version, about = "Deterministic cooperative-kernel simulator and checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a cooperative kernel, optionally multitasked with a synthetic
    /// non-cooperative workload, and write metric records.
    Run(cmd_run::RunArgs),
    /// Exhaustively explore a small instance and report property verdicts.
    Check(cmd_check::CheckArgs),
    /// Aggregate a directory of run records into figure CSV series.
    Report(cmd_report::ReportArgs),
}

fn main() {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => cmd_run::run(args),
        Command::Check(args) => cmd_check::run(args),
        Command::Report(args) => cmd_report::run(args),
    };
    match code {
        Ok(c) => std::process::exit(c),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
