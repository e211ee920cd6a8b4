//! Command-line surface: configuration, file formats and the five pipelines.
//!
//! Every command reads a JSON [`RunConfig`]; the seed and output directory
//! can be overridden by `BTDP_SEED` / `BTDP_OUT` and then by `--seed` /
//! `--out`. Outputs are CSV tables and a JSON-lines posterior archive.

pub mod commands;
pub mod config;
pub mod io;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "bt-dpm", version, about = "Nonparametric Bradley-Terry inference in random environment")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate outcomes (and hidden strengths) from the configured truth.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run the Gibbs sampler on an outcomes file.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Outcomes CSV (default: <out>/outcomes.csv).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Tabulate the posterior density from an archive.
    Estimate {
        #[command(flatten)]
        common: Common,
        /// Posterior archive (default: <out>/posterior.jsonl).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Simulate championships from a density table.
    Predict {
        #[command(flatten)]
        common: Common,
        /// Density table (default: <out>/density.csv).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Check the forgetting and concentration bounds numerically.
    Diagnose {
        #[command(flatten)]
        common: Common,
    },
}

/// Executes a parsed command and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let (common, input) = match &cli.command {
        Command::Simulate { common } | Command::Diagnose { common } => (common, None),
        Command::Fit { common, input } | Command::Estimate { common, input } | Command::Predict { common, input } => {
            (common, input.as_deref())
        }
    };
    let cfg = RunConfig::load(&common.config)?;
    let seed = config::resolve_seed(&cfg, common.seed)?;
    let out = config::resolve_out(&cfg, common.out.as_deref());
    match &cli.command {
        Command::Simulate { .. } => commands::cmd_simulate(&cfg, seed, &out),
        Command::Fit { .. } => commands::cmd_fit(&cfg, seed, &out, input),
        Command::Estimate { .. } => commands::cmd_estimate(&cfg, &out, input),
        Command::Predict { .. } => commands::cmd_predict(&cfg, seed, &out, input),
        Command::Diagnose { .. } => commands::cmd_diagnose(&cfg, seed, &out).map(|(files, _)| files),
    }
}
