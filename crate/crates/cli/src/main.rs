#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod output;
mod pipeline;

use config::RunConfig;

/// Certify, solve and verify a chain of transfer operators described by a TOML file.
///
/// Exit status: 0 all checks passed, 1 a check or solve failed, 2 bad
/// configuration or unwritable output, 3 a hypothesis failed certification.
/// The output directory can be overridden with NSRPF_OUTPUT_DIR.
#[derive(Parser)]
#[command(name = "nsrpf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: certification, solvers, requested checks and artifacts.
    Run { config: PathBuf },
    /// Hypothesis certification only; writes constants.txt and report.txt.
    Certify { config: PathBuf },
    /// Compare the solver with explicit matrix products (matrix chains only).
    Oracle { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let path = match &cli.command {
        Command::Run { config } | Command::Certify { config } | Command::Oracle { config } => config,
    };
    let cfg = match RunConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Run { .. } => pipeline::run(&cfg),
        Command::Certify { .. } => pipeline::certify_only(&cfg),
        Command::Oracle { .. } => pipeline::oracle(&cfg),
    };
    match result {
        Ok(summary) => {
            for l in &summary.lines {
                println!("{} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.check, l.detail);
            }
            println!("artifacts in {}", summary.dir.display());
            if summary.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(f) => {
            eprintln!("{}", f.message());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
