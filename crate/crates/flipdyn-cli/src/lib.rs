//! Command-line front end for the `flipdyn` solver: scenario files, solving,
//! calibration, Monte-Carlo simulation and CSV export.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "flipdyn", version, about = "Solve, calibrate and simulate FlipDyn takeover games")]
pub struct Cli {
    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Master seed, overriding the config's run.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Suppress progress output on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the backward recursion and write values.csv and strategies.csv.
    Solve {
        /// Config path or bundled name (scalar_e085, scalar_e100, ndim_e085, ndim_e100).
        config: String,
    },
    /// Calibrate the adversary costs and write calibration.csv.
    Calibrate {
        config: String,
        #[arg(long, value_enum, default_value_t = Target::Dual)]
        target: Target,
        /// Also write per_step_costs.csv with a separate minimal N for each step.
        #[arg(long)]
        per_step: bool,
    },
    /// Run Monte-Carlo rollouts and write rollups.csv and summary.csv.
    Simulate {
        config: String,
        /// Number of rollouts, overriding the config's run.n_runs.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Run the calibrate-then-solve pipeline for a figure into figures/figN/.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        figure: u8,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// Minimal N, both as given and with G¹ at its mixed-regime minimum.
    #[value(name = "N")]
    N,
    /// Minimal G¹ scale at the config's N.
    #[value(name = "G1")]
    G1,
    /// Joint N and G¹.
    #[value(name = "dual")]
    Dual,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let ctx = commands::Context { out: cli.out.clone(), seed: cli.seed, quiet: cli.quiet };
    match &cli.command {
        Command::Solve { config } => commands::solve(&ctx, config),
        Command::Calibrate { config, target, per_step } => commands::calibrate(&ctx, config, *target, *per_step),
        Command::Simulate { config, runs } => commands::simulate(&ctx, config, *runs),
        Command::Reproduce { figure } => commands::reproduce(&ctx, *figure),
    }
}
