use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Cycle forming times, circulation fluctuation checks and rate functions
/// for finite Markov chains.
#[derive(Debug, Parser)]
#[command(name = "cyclecirc", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a chain file and print its stationary law and cycle data.
    Validate(ValidateArgs),
    /// Simulate replicas and write every watched cycle event as CSV.
    Simulate(Common),
    /// Ratio, conditional-law and independence checks on first forming cycles.
    Haldane(HaldaneArgs),
    /// Transient, integral and generating-function fluctuation checks.
    Ft(FtArgs),
    /// Estimate the scaled cumulant generating function on a lambda grid.
    Scgf(ScgfArgs),
    /// Rate function by Legendre-Fenchel transform, with an optional symmetry check.
    Rate(RateArgs),
    /// Dump the exact joint law of cycle counts at the horizon.
    Exact(ExactArgs),
    /// Entropy production decomposition along sampled trajectories (CTMC).
    Entropy(EntropyArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Chain file (TOML or JSON).
    pub chain: PathBuf,
    /// Cycles to report, e.g. "(E,ES,EP),(E,EP,ES)".
    #[arg(long)]
    pub cycles: Option<String>,
    #[arg(long)]
    pub start: Option<String>,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Chain file (TOML or JSON).
    pub chain: PathBuf,
    /// Cycle family, e.g. "(E,ES,EP),(E,EP,ES)".
    #[arg(long)]
    pub cycles: Option<String>,
    /// Start state label.
    #[arg(long)]
    pub start: Option<String>,
    /// Time horizon (CTMC).
    #[arg(long = "t")]
    pub t: Option<f64>,
    /// Step horizon (DTMC).
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub replicas: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HaldaneArgs {
    #[command(flatten)]
    pub common: Common,
    /// exact | mc
    #[arg(long)]
    pub mode: Option<String>,
    /// similar | common
    #[arg(long, default_value = "similar")]
    pub family_mode: String,
    /// CTMC exact evaluation times, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// Also write per-cell residuals as CSV.
    #[arg(long)]
    pub cells: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FtArgs {
    #[command(flatten)]
    pub common: Common,
    /// exact | mc
    #[arg(long)]
    pub mode: Option<String>,
    /// Per-cycle count cap of the exact lattice.
    #[arg(long)]
    pub caps: Option<usize>,
    /// a:b:step per cycle, or one shared axis.
    #[arg(long)]
    pub lambda_grid: Option<String>,
    /// Also write per-cell residuals as CSV.
    #[arg(long)]
    pub cells: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScgfArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub lambda_grid: Option<String>,
    /// circulation | net
    #[arg(long, default_value = "net")]
    pub observable: String,
}

#[derive(Debug, Args)]
pub struct RateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub lambda_grid: Option<String>,
    #[arg(long)]
    pub x_grid: Option<String>,
    /// circulation | net; ignored with --check.
    #[arg(long, default_value = "net")]
    pub observable: String,
    /// Symmetry to test: "net:K" or "swap:K,L" (1-based cycle positions).
    #[arg(long)]
    pub check: Option<String>,
    /// Where to write the symmetry report JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub caps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Observation times, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub times: Option<Vec<f64>>,
    /// Where to write the summary report JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}
