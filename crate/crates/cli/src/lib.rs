//! Batch experiment runner for the pe-align library.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod report;
pub mod suite;

#[derive(Debug, Parser)]
#[command(name = "pe-align", version, about = "Permutation-equivariant precoding experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `[output] dir`)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed (overrides the config's `seed`)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Trial count for verification, instance count for `solve`
    #[arg(long, global = true)]
    pub trials: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Run the baseline solver on random instances
    Solve,
    /// Compare solver steps with their re-expressed forms
    VerifyRie,
    /// Run the equivariance suite
    CheckEquivariance,
    /// Train a PS precoding model
    Train,
    /// Evaluate a trained model across user counts
    EvalGeneralization,
    /// Analytic operation counts across set sizes
    CountFlops,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::VerifyRie => "verify-rie",
            Command::CheckEquivariance => "check-equivariance",
            Command::Train => "train",
            Command::EvalGeneralization => "eval-generalization",
            Command::CountFlops => "count-flops",
        }
    }
}

/// Outcome of a run that produced its artifacts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    /// A verification ran to completion and found a violation.
    ChecksFailed(String),
}

impl Status {
    pub fn exit_code(&self) -> i32 {
        match self {
            Status::Success => 0,
            Status::ChecksFailed(_) => 2,
        }
    }
}

pub fn run(cli: &Cli) -> Result<Status> {
    let overrides = config::Overrides {
        seed: cli.seed,
        trials: cli.trials,
    };
    let cfg = config::load(cli.config.as_deref(), &overrides)?;
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(cli.command.name()));
    let mut out = report::Emitter::create(&dir, cfg.output.clone(), &cfg.to_toml()?)?;
    let status = match cli.command {
        Command::Solve => commands::solve(&cfg, &mut out)?,
        Command::VerifyRie => commands::verify_rie(&cfg, &mut out)?,
        Command::CheckEquivariance => commands::check_equivariance(&cfg, &mut out)?,
        Command::Train => commands::train(&cfg, &mut out)?,
        Command::EvalGeneralization => commands::eval_generalization(&cfg, &mut out)?,
        Command::CountFlops => commands::count_flops(&cfg, &mut out)?,
    };
    Ok(status)
}
