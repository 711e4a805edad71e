//! Command layer of the `srde` binary.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::Flags;
pub use config::{Prepared, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
        }
    }
}

/// Numerical laboratory for a stochastic reaction-diffusion equation.
#[derive(Debug, Parser)]
#[command(name = "srde", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report the noise regularity, the admissibility window and the
    /// predicted Hölder exponents. Exits 0 iff admissible.
    Check(CommonArgs),
    /// Run one patched global path and write its record, series and heatmap.
    Simulate(CommonArgs),
    /// Run many seeds and write verdicts on dissipation, explosion and
    /// Hölder regularity.
    Ensemble(CommonArgs),
    /// Scan a (beta, gamma) lattice for explosion fractions.
    Phase(CommonArgs),
    /// Estimate Hölder exponents in space and time from an ensemble.
    Holder(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Run configuration (JSON, schema 1).
    #[arg(long)]
    pub config: PathBuf,
    /// Run even if the configuration is not admissible.
    #[arg(long)]
    pub force: bool,
    /// Explosion is the expected outcome and does not fail the run.
    #[arg(long)]
    pub expect_explosion: bool,
    /// First seed; overrides `ensemble.first_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides `outputs.directory`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Check(a) | Command::Simulate(a) | Command::Ensemble(a) | Command::Phase(a) | Command::Holder(a) => a,
        }
    }
}

/// Loads the configuration, applies command-line overrides and runs the
/// command.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let args = cli.command.args();
    let mut config = config::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.ensemble.first_seed = seed;
    }
    if let Some(out) = &args.out {
        config.outputs.directory = out.clone();
    }
    let prepared = config::prepare(config)?;
    let flags = Flags {
        force: args.force,
        expect_explosion: args.expect_explosion,
    };
    match cli.command {
        Command::Check(_) => commands::check(&prepared),
        Command::Simulate(_) => commands::simulate(&prepared, flags),
        Command::Ensemble(_) => commands::ensemble(&prepared, flags),
        Command::Phase(_) => commands::phase(&prepared),
        Command::Holder(_) => commands::holder(&prepared),
    }
}
