use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use mmucb_cli::commands::{cmd_coverage, cmd_radii_compare, cmd_regret, cmd_widths};
use mmucb_cli::{selftest, ExperimentConfig, ExperimentKind, Overrides};

/// Confidence-sequence UCB experiments.
#[derive(Parser)]
#[command(name = "mmucb", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Cumulative regret of the configured policies on synthetic linear bandits.
    Regret,
    /// Fraction of runs whose confidence sets contain theta* at every round.
    Coverage,
    /// Average confidence-bound widths over a grid of T and d.
    Widths,
    /// Per-round radii of standard and adaptive mixtures.
    RadiiCompare,
    /// Oracle and incremental-algebra self-checks.
    Selftest,
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(jobs) = cli.flags.jobs.filter(|&j| j > 0) {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    let kind = match cli.command {
        Command::Selftest => return selftest::run_all(cli.flags.seed.unwrap_or(0)),
        Command::Regret => ExperimentKind::Regret,
        Command::Coverage => ExperimentKind::Coverage,
        Command::Widths => ExperimentKind::Widths,
        Command::RadiiCompare => ExperimentKind::RadiiCompare,
    };
    let cfg = ExperimentConfig::resolve(kind, &cli.flags)?;
    match kind {
        ExperimentKind::Regret => cmd_regret(&cfg).map(|_| ()),
        ExperimentKind::Coverage => cmd_coverage(&cfg).map(|_| ()),
        ExperimentKind::Widths => cmd_widths(&cfg).map(|_| ()),
        ExperimentKind::RadiiCompare => cmd_radii_compare(&cfg),
    }?;
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
