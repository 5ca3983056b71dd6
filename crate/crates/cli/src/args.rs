use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "qvi-geometry",
    version,
    about = "Geometry of Q-value iteration on finite MDPs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check an MDP file and report the first violated invariant.
    Validate {
        mdp: PathBuf,
        /// Rescale transition rows to sum to one before validating.
        #[arg(long)]
        renormalize: bool,
    },
    /// Write a built-in example MDP.
    Example { name: String, out: PathBuf },
    /// Solve, certify and summarize an MDP as a JSON report.
    Analyze(AnalyzeArgs),
    /// Run deterministic Q-value iteration and write per-trajectory CSVs.
    Trajectory(TrajectoryArgs),
    /// Run tabular Q-learning and write per-trajectory CSVs.
    Qlearn(QlearnArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    pub mdp: PathBuf,
    /// Tube radius as a fraction of the minimum action gap, in (0, 0.5).
    #[arg(long, default_value_t = 0.4)]
    pub delta_frac: f64,
    /// Value-iteration tolerance on the distance to Q*.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Iteration budget for value iteration.
    #[arg(long, default_value_t = 1_000_000)]
    pub max_iter: usize,
    /// Rescale transition rows before validating.
    #[arg(long)]
    pub renormalize: bool,
    /// Disable the data-parallel paths.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub common: Common,
    /// Product depth for the JSR certificates.
    #[arg(long, default_value_t = 3)]
    pub depth: usize,
    /// Maximum number of policy sequences enumerated per depth.
    #[arg(long, default_value_t = 4096)]
    pub cap: u128,
    /// Seed for sampled lower bounds beyond the cap.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Initial point for the horizons, a JSON `[s][a]` table.
    #[arg(long)]
    pub q0: Option<PathBuf>,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(id = "start", multiple = false)]
pub struct Start {
    /// Initial point as a JSON `[s][a]` table.
    #[arg(long, group = "start")]
    pub q0: Option<PathBuf>,
    /// The documented initial point of the toy3x2 example.
    #[arg(long = "paper-q0", group = "start")]
    pub reference_q0: bool,
    /// M initial points on a circle of radius R around Q* in the plot plane.
    #[arg(long, group = "start", value_name = "R:M")]
    pub circle: Option<Circle>,
}

#[derive(Debug, Args)]
pub struct TrajectoryArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub start: Start,
    #[arg(long, default_value_t = 50)]
    pub iters: usize,
    /// Output directory for the CSVs and manifest.json.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub csv: PathBuf,
}

#[derive(Debug, Args)]
pub struct QlearnArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub start: Start,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100_000)]
    pub steps: u64,
    /// Step size α_t = alpha0 / (1 + decay·t).
    #[arg(long, default_value_t = 0.35)]
    pub alpha0: f64,
    #[arg(long, default_value_t = 0.01)]
    pub decay: f64,
    /// Record every this many steps; the last step is always recorded.
    #[arg(long, default_value_t = 100)]
    pub stride: u64,
    /// Fixed 1-based start state; uniform draw when omitted.
    #[arg(long)]
    pub initial_state: Option<usize>,
    /// Standard deviation of Gaussian noise added to rewards.
    #[arg(long, default_value_t = 0.0)]
    pub reward_noise: f64,
    /// Output directory for the CSVs and manifest.json.
    #[arg(long, value_name = "DIR", default_value = ".")]
    pub csv: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub radius: f64,
    pub count: usize,
}

impl FromStr for Circle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (r, m) = s.split_once(':').ok_or("expected R:M, e.g. 2:12")?;
        let radius: f64 = r.parse().map_err(|_| format!("bad radius {r:?}"))?;
        let count: usize = m.parse().map_err(|_| format!("bad count {m:?}"))?;
        if !(radius > 0.0 && radius.is_finite()) || count == 0 {
            return Err("radius must be positive and count at least 1".into());
        }
        Ok(Self { radius, count })
    }
}
