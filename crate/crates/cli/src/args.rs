use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ebars::evidence::PosteriorMode;
use ebars::experiments::SCENARIOS;
use ebars::sampler::{ChainConfig, RejectionRule};
use ebars::tsme::ManifoldShape;
use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "ebars", version, about = "Bayesian free-knot spline regression and manifold denoising")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample knot configurations for a CSV of predictors followed by a response column.
    Fit(FitArgs),
    /// Run a named simulation scenario over replicated datasets.
    Experiment(ExperimentArgs),
    /// Embed a point cloud with ISOMAP and smooth every coordinate with a spline fit.
    Denoise(DenoiseArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Exact,
    Ebic,
}

impl From<ModeArg> for PosteriorMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => Self::Exact,
            ModeArg::Ebic => Self::Ebic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectionArg {
    /// Keep and record the current state after a rejection.
    Stay,
    /// Propose again until a move is accepted (not posterior invariant).
    Repropose,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ChainArgs {
    /// Exponent of the knot-count prior.
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Birth/death probability scale.
    #[arg(long, default_value_t = 0.4)]
    pub c: f64,
    #[arg(long, default_value_t = 5000)]
    pub burnin: usize,
    /// Recorded samples after burn-in.
    #[arg(long, default_value_t = 5000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub thin: usize,
    /// Candidate knot locations per dimension; one value applies to all
    /// [default: 100 in one dimension, 20 otherwise]
    #[arg(long, value_delimiter = ',')]
    pub candidates: Vec<usize>,
    /// Spline degree per dimension; one value applies to all.
    #[arg(long, value_delimiter = ',', default_value = "3")]
    pub degree: Vec<usize>,
    /// Posterior used for acceptance [default: exact in one dimension, ebic otherwise]
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Hold the knot count per dimension fixed and only relocate knots.
    #[arg(long, value_delimiter = ',')]
    pub fixed_k: Vec<usize>,
    /// Upper bound on knots per dimension.
    #[arg(long, value_delimiter = ',')]
    pub k_max: Vec<usize>,
    #[arg(long, value_enum, default_value = "stay")]
    pub rejection: RejectionArg,
}

fn per_dim(flag: &str, v: &[usize], d: usize) -> CliResult<Vec<usize>> {
    match v.len() {
        1 => Ok(vec![v[0]; d]),
        n if n == d => Ok(v.to_vec()),
        n => Err(CliError::Usage(format!("--{flag} takes 1 or {d} values, got {n}"))),
    }
}

impl ChainArgs {
    /// Resolves the flags for a `d`-dimensional regression.
    pub fn config(&self, d: usize) -> CliResult<ChainConfig> {
        let base = ChainConfig::new(d);
        let candidates = if self.candidates.is_empty() {
            base.candidates
        } else {
            per_dim("candidates", &self.candidates, d)?
        };
        let mode = self.mode.map(PosteriorMode::from).unwrap_or(if d == 1 {
            PosteriorMode::Exact
        } else {
            PosteriorMode::Ebic
        });
        let optional = |flag: &str, v: &[usize]| -> CliResult<Option<Vec<usize>>> {
            if v.is_empty() { Ok(None) } else { per_dim(flag, v, d).map(Some) }
        };
        let config = ChainConfig {
            gamma: self.gamma,
            c: self.c,
            burn_in: self.burnin,
            steps: self.steps,
            thin: self.thin,
            mode,
            seed: self.seed,
            fixed_k: optional("fixed-k", &self.fixed_k)?,
            candidates,
            degrees: per_dim("degree", &self.degree, d)?,
            k_max: optional("k-max", &self.k_max)?,
            draw_coefficients: false,
            rejection: match self.rejection {
                RejectionArg::Stay => RejectionRule::StayAndRecord,
                RejectionArg::Repropose => RejectionRule::Repropose,
            },
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// CSV with a header; every column but the last is a predictor.
    pub input: PathBuf,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Map each predictor onto [0, 1] by its observed range.
    #[arg(long)]
    pub rescale: bool,
    /// Held-out CSV in the same layout; its mean squared error is reported.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Kernel bandwidth for knot intensities [default: Silverman's rule]
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Output directory [default: $EBARS_OUT_DIR or ebars-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ExperimentArgs {
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(SCENARIOS))]
    pub name: String,
    /// Observations per replication.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads [default: available parallelism]
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Also write each replication's dataset as data_<r>.csv.
    #[arg(long)]
    pub emit_data: bool,
    /// Output directory [default: $EBARS_OUT_DIR or ebars-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleArg {
    Spiral,
    SwissRoll,
}

impl OracleArg {
    pub fn shape(self) -> ManifoldShape {
        match self {
            Self::Spiral => ManifoldShape::SPIRAL,
            Self::SwissRoll => ManifoldShape::SWISS_ROLL,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct DenoiseArgs {
    /// CSV with a header; every column is an ambient coordinate.
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub intrinsic_dim: usize,
    /// Nearest neighbours in the ISOMAP graph.
    #[arg(long, default_value_t = 10)]
    pub neighbors: usize,
    /// Report distances to this reference manifold before and after denoising.
    #[arg(long, value_enum)]
    pub oracle: Option<OracleArg>,
    #[command(flatten)]
    pub chain: ChainArgs,
    /// Output directory [default: $EBARS_OUT_DIR or ebars-out]
    #[arg(long)]
    pub out: Option<PathBuf>,
}
