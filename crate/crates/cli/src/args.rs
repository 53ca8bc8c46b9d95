//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gmmamp::amp::{DEFAULT_INIT_NOISE, DEFAULT_MAX_ITERS as AMP_MAX_ITERS, DEFAULT_TOL as AMP_TOL};
use gmmamp::kmeans::DEFAULT_RESTARTS;
use gmmamp::se::{
    DEFAULT_EPSILON, DEFAULT_MAX_ITERS as SE_MAX_ITERS, DEFAULT_SAMPLES, DEFAULT_TOL as SE_TOL,
};
use serde::Serialize;

use crate::output::Format;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "gmmamp",
    version,
    about = "Message-passing clustering of high-dimensional Gaussian mixtures"
)]
#[command(args_override_self = true)]
pub struct Cli {
    /// Master seed for every random stream of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, global = true, default_value = "gmmamp-out")]
    pub out: PathBuf,
    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "GMMAMP_THREADS")]
    pub threads: Option<usize>,
    /// Key-value file of flags; explicit flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Sample a synthetic instance into an instance directory.
    Generate(GenerateArgs),
    /// Run message passing on an instance directory.
    Amp(AmpArgs),
    /// Iterate the scalar state evolution over a range of signal strengths.
    Se(SeArgs),
    /// Spinodal, information-theoretic and algorithmic thresholds.
    #[command(alias = "phase")]
    PhaseDiagram(PhaseArgs),
    /// Spectral clustering baseline on an instance directory.
    Pca(PcaArgs),
    /// Regenerate the datasets behind the figures.
    Reproduce(ReproduceArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Generate(_) => "generate",
            Command::Amp(_) => "amp",
            Command::Se(_) => "se",
            Command::PhaseDiagram(_) => "phase-diagram",
            Command::Pca(_) => "pca",
            Command::Reproduce(_) => "reproduce",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// Dimension.
    #[arg(long)]
    pub n: usize,
    /// Number of points.
    #[arg(long)]
    pub m: usize,
    /// Number of clusters.
    #[arg(long)]
    pub r: usize,
    /// Signal strength.
    #[arg(long)]
    pub rho: f64,
    /// Noise variance.
    #[arg(long, default_value_t = 1.0)]
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AmpInitArg {
    Uninformative,
    Informative,
}

#[derive(Debug, Args, Serialize)]
pub struct AmpArgs {
    /// Instance directory written by `generate`.
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value_t = AmpInitArg::Uninformative)]
    pub init: AmpInitArg,
    #[arg(long, default_value_t = AMP_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = AMP_TOL)]
    pub tol: f64,
    /// Weight of the previous iterate, in [0, 1).
    #[arg(long, default_value_t = 0.0)]
    pub damping: f64,
    #[arg(long, default_value_t = DEFAULT_INIT_NOISE)]
    pub init_noise: f64,
    /// Drop the Onsager memory terms (ablation).
    #[arg(long)]
    pub no_onsager: bool,
    /// Write the estimated labels to assignments.csv.
    #[arg(long)]
    pub assignments: bool,
    /// Write the per-iteration overlap to trajectory.csv.
    #[arg(long)]
    pub trajectory: bool,
    /// Skip the state-evolution prediction in result.json.
    #[arg(long)]
    pub no_se: bool,
    /// Monte Carlo samples for the state-evolution prediction.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SeInitArg {
    Uninformative,
    Informative,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct SeArgs {
    #[arg(long)]
    pub r: usize,
    /// Points per dimension, m / n.
    #[arg(long)]
    pub alpha: f64,
    /// A single signal strength; otherwise use the range flags.
    #[arg(long, conflicts_with_all = ["rho_min", "rho_max"])]
    pub rho: Option<f64>,
    #[arg(long, requires = "rho_max")]
    pub rho_min: Option<f64>,
    #[arg(long, requires = "rho_min")]
    pub rho_max: Option<f64>,
    /// Grid points between rho-min and rho-max inclusive.
    #[arg(long, default_value_t = 21)]
    pub rho_steps: usize,
    #[arg(long, value_enum, default_value_t = SeInitArg::Both)]
    pub init: SeInitArg,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Starting value of the uninformative recursion.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = SE_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = SE_MAX_ITERS)]
    pub max_iters: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct PhaseArgs {
    /// A single number of clusters; otherwise use r-min and r-max.
    #[arg(long, conflicts_with_all = ["r_min", "r_max"])]
    pub r: Option<usize>,
    #[arg(long, requires = "r_max")]
    pub r_min: Option<usize>,
    #[arg(long, requires = "r_min")]
    pub r_max: Option<usize>,
    /// Comma-separated values of m / n.
    #[arg(long, value_delimiter = ',', default_value = "2")]
    pub alpha: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    pub samples: usize,
    /// Signal strengths per (r, alpha) in phase_grid, spread over (0, 1.5 rho_c].
    #[arg(long, default_value_t = 60)]
    pub grid_steps: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct PcaArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// k-means restarts.
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,
    /// Write the projected points to projected.csv.
    #[arg(long)]
    pub projected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Full,
}

#[derive(Debug, Args, Serialize)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub figure: Figure,
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    pub scale: Scale,
    /// Monte Carlo samples; defaults depend on the figure and scale.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Independent instances per simulated signal strength.
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Only the theory curves, no simulations.
    #[arg(long)]
    pub skip_simulation: bool,
    /// Also write an SVG chart.
    #[arg(long)]
    pub svg: bool,
}
