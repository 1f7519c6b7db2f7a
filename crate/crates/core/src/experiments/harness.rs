//! Replicated experiment runs.
//!
//! Replication `r` of a scenario with master seed `s` uses the seed
//! `split_seed(s, r)`. Inside a replication, stream 0 generates the data,
//! stream 1 seeds the fixed-k chain and stream 2 the free-k chain. Reports are
//! therefore identical for any number of worker threads.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::generators::{CurveCase, Generated, LinearCase};
use crate::error::{Error, Result};
use crate::evidence::PosteriorMode;
use crate::inference::{estimate_knots_fixed_k, knot_location_intensity, knot_number_histogram, predict};
use crate::sampler::{run, ChainConfig};
use crate::stats::{self, censored_mse, mse, split_seed};
use crate::tsme::{gmsd, isomap, reconstruct, ManifoldOracle, ManifoldSample, ManifoldShape};

/// Names accepted by [`ScenarioSpec::named`].
pub const SCENARIOS: [&str; 6] = ["knots-k1", "knots-k2", "knots-k4", "gamma-sweep", "gmsd-spiral", "gmsd-swiss"];

pub const DEFAULT_REPS: usize = 20;

/// Half-width of the window placed around each true knot when integrating the
/// knot intensity.
pub const KNOT_WINDOW: f64 = 0.025;

/// Neighbour count for the spiral scenario. A k-NN graph along a curve splits
/// wherever one gap exceeds the reach of `k` neighbours, which happens in a
/// few percent of replications at `k = 10`.
pub const SPIRAL_NEIGHBORS: usize = 20;

/// Kernel bandwidth used for knot intensities in the knot scenarios.
pub const KNOT_BANDWIDTH: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScenarioKind {
    Knots { case: LinearCase },
    GammaSweep { case: CurveCase, gammas: Vec<f64>, test_size: usize },
    Gmsd { shape: ManifoldShape, neighbors: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    pub description: String,
    pub kind: ScenarioKind,
    /// True knot locations, when the truth is a spline.
    pub true_knots: Option<Vec<f64>>,
    pub noise_sd: f64,
    pub m: usize,
    pub reps: usize,
    pub seed: u64,
    pub chain: ChainConfig,
    /// Kernel bandwidth for knot intensities; `None` selects Silverman's rule.
    pub bandwidth: Option<f64>,
    /// True when the generating function is a documented stand-in rather than
    /// a known constant.
    pub stand_in: bool,
    /// Worker threads; `0` uses the available parallelism.
    #[serde(skip)]
    pub jobs: usize,
}

impl ScenarioSpec {
    pub fn named(name: &str) -> Result<Self> {
        let unknown = || Error::UnknownScenario { name: name.into(), available: SCENARIOS.map(String::from).to_vec() };
        let base = |kind, description: &str, noise_sd, m, chain, stand_in, true_knots| Self {
            name: name.into(),
            description: description.into(),
            kind,
            true_knots,
            noise_sd,
            m,
            reps: DEFAULT_REPS,
            seed: 1,
            chain,
            bandwidth: None,
            stand_in,
            jobs: 0,
        };
        let spec = match name {
            "knots-k1" | "knots-k2" | "knots-k4" => {
                let case: LinearCase = name.trim_start_matches("knots-").parse().map_err(|_| unknown())?;
                let chain = ChainConfig { degrees: vec![1], candidates: vec![100], ..ChainConfig::new(1) };
                let description = format!("piecewise-linear truth with knots {:?}", case.knots());
                Self {
                    bandwidth: Some(KNOT_BANDWIDTH),
                    ..base(
                        ScenarioKind::Knots { case },
                        &description,
                        case.noise_sd(),
                        500,
                        chain,
                        false,
                        Some(case.knots()),
                    )
                }
            }
            "gamma-sweep" => {
                let case = CurveCase::C3;
                base(
                    ScenarioKind::GammaSweep { case, gammas: vec![1.0, 0.5, 0.0], test_size: 500 },
                    "curve with one jump, cubic splines, prior exponents 1, 0.5 and 0",
                    case.noise_sd(),
                    500,
                    ChainConfig::new(1),
                    true,
                    None,
                )
            }
            "gmsd-spiral" => base(
                ScenarioKind::Gmsd { shape: ManifoldShape::SPIRAL, neighbors: SPIRAL_NEIGHBORS },
                "noisy spiral in the plane",
                0.2,
                1000,
                ChainConfig::new(1),
                true,
                None,
            ),
            "gmsd-swiss" => base(
                ScenarioKind::Gmsd { shape: ManifoldShape::SWISS_ROLL, neighbors: 10 },
                "noisy swiss roll in 3-space",
                1.5,
                3000,
                ChainConfig { mode: PosteriorMode::Ebic, ..ChainConfig::new(2) },
                true,
                None,
            ),
            _ => return Err(unknown()),
        };
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sd > 0.0) {
            return Err(Error::InvalidParameter(format!("noise sd {} must be positive", self.noise_sd)));
        }
        if self.reps == 0 {
            return Err(Error::InvalidParameter("at least one replication is required".into()));
        }
        self.chain.validate()
    }

    pub fn rep_seed(&self, r: usize) -> u64 {
        split_seed(self.seed, r as u64)
    }

    /// Training data of replication `r` for the regression scenarios.
    pub fn dataset(&self, r: usize) -> Result<Generated> {
        let seed = split_seed(self.rep_seed(r), 0);
        match &self.kind {
            ScenarioKind::Knots { case } => case.sample(self.m, self.noise_sd, seed),
            ScenarioKind::GammaSweep { case, .. } => case.sample(self.m, self.noise_sd, seed),
            ScenarioKind::Gmsd { .. } => {
                Err(Error::InvalidParameter(format!("scenario {} generates point clouds", self.name)))
            }
        }
    }

    /// Noisy point cloud of replication `r` for the manifold scenarios.
    pub fn manifold_sample(&self, r: usize) -> Result<ManifoldSample> {
        match &self.kind {
            ScenarioKind::Gmsd { shape, .. } => shape.sample(self.m, self.noise_sd, split_seed(self.rep_seed(r), 0)),
            _ => Err(Error::InvalidParameter(format!("scenario {} generates regression data", self.name))),
        }
    }

    fn chain_for(&self, r: usize, stream: u64) -> ChainConfig {
        ChainConfig { seed: split_seed(self.rep_seed(r), stream), ..self.chain.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub scenario: String,
    pub stand_in: bool,
    pub metrics: Vec<String>,
    pub seeds: Vec<u64>,
    /// One row per replication, aligned with `metrics`.
    pub rows: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Standard deviation across replications, divisor `R - 1`.
    pub sd: Vec<f64>,
}

impl ReplicationReport {
    pub fn new(scenario: &str, stand_in: bool, metrics: Vec<String>, seeds: Vec<u64>, rows: Vec<Vec<f64>>) -> Self {
        let cols: Vec<Vec<f64>> = (0..metrics.len()).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self {
            scenario: scenario.into(),
            stand_in,
            mean: cols.iter().map(|c| stats::mean(c)).collect(),
            sd: cols.iter().map(|c| stats::sd(c)).collect(),
            metrics,
            seeds,
            rows,
        }
    }

    pub fn column(&self, metric: &str) -> Option<Vec<f64>> {
        let j = self.metrics.iter().position(|m| m == metric)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn mean_of(&self, metric: &str) -> Option<f64> {
        self.metrics.iter().position(|m| m == metric).map(|j| self.mean[j])
    }

    pub fn median_of(&self, metric: &str) -> Option<f64> {
        self.column(metric).map(|c| stats::median(&c))
    }

    /// One row per replication followed by `mean` and `sd` summary rows.
    /// Numbers carry 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["scenario".to_string(), "stand_in".into(), "replication".into(), "seed".into()];
        header.extend(self.metrics.iter().cloned());
        w.write_record(&header)?;
        let lead = |rep: String, seed: String| vec![self.scenario.clone(), self.stand_in.to_string(), rep, seed];
        for (r, (row, seed)) in self.rows.iter().zip(&self.seeds).enumerate() {
            let mut rec = lead(r.to_string(), seed.to_string());
            rec.extend(row.iter().map(|v| format_f64(*v)));
            w.write_record(&rec)?;
        }
        for (label, vals) in [("mean", &self.mean), ("sd", &self.sd)] {
            let mut rec = lead(label.into(), String::new());
            rec.extend(vals.iter().map(|v| format_f64(*v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scientific notation with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Runs `f(0..n)` on up to `jobs` threads, keeping results in index order.
fn par_map<T: Send>(n: usize, jobs: usize, f: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let jobs = if jobs == 0 { std::thread::available_parallelism().map_or(1, |j| j.get()) } else { jobs };
    let jobs = jobs.clamp(1, n.max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let out = f(i);
                slots.lock().expect("result slots poisoned")[i] = Some(out);
            });
        }
    });
    slots.into_inner().expect("result slots poisoned").into_iter().map(|s| s.expect("every index ran")).collect()
}

/// Sorted absolute differences, matching estimates to truth by sorted order.
fn sorted_errors(estimate: &[f64], truth: &[f64]) -> Vec<f64> {
    let mut e = estimate.to_vec();
    let mut t = truth.to_vec();
    e.sort_by(f64::total_cmp);
    t.sort_by(f64::total_cmp);
    e.iter().zip(&t).map(|(a, b)| (a - b).abs()).collect()
}

fn distinct(v: &[f64]) -> Vec<f64> {
    let mut d = v.to_vec();
    d.sort_by(f64::total_cmp);
    d.dedup();
    d
}

/// Knot-location errors from a fixed-k chain and knot-count and intensity
/// summaries from a free-k chain, per replication.
///
/// Metrics: `err_1..err_K` (sorted absolute location errors), `mean_k`
/// (posterior mean knot count), `window_<x>` (intensity integral over
/// `[x - 0.025, x + 0.025]` for every distinct true knot `x`) and
/// `accept_rate` of the free-k chain.
pub fn run_knot_inference(spec: &ScenarioSpec) -> Result<ReplicationReport> {
    spec.validate()?;
    let truth = spec
        .true_knots
        .clone()
        .ok_or_else(|| Error::InvalidParameter(format!("scenario {} has no true knots", spec.name)))?;
    let k = truth.len();
    let windows = distinct(&truth);
    let mut metrics: Vec<String> = (1..=k).map(|j| format!("err_{j}")).collect();
    metrics.push("mean_k".into());
    metrics.extend(windows.iter().map(|x| format!("window_{x}")));
    metrics.push("accept_rate".into());

    let rows = par_map(spec.reps, spec.jobs, |r| {
        let g = spec.dataset(r)?;
        let fixed = ChainConfig { fixed_k: Some(vec![k]), ..spec.chain_for(r, 1) };
        let fixed_trace = run(&g.data, &fixed)?;
        let est = estimate_knots_fixed_k(&fixed_trace, &[k])?;
        let mut row = sorted_errors(&est[0], &truth);

        let free = ChainConfig { fixed_k: None, ..spec.chain_for(r, 2) };
        let trace = run(&g.data, &free)?;
        row.push(knot_number_histogram(&trace)?.mean_total);
        let intensity = &knot_location_intensity(&trace, 201, spec.bandwidth)?[0];
        row.extend(windows.iter().map(|x| intensity.window_integral(x - KNOT_WINDOW, x + KNOT_WINDOW)));
        row.push(trace.counters.acceptance_rate());
        Ok(row)
    })?;
    let seeds = (0..spec.reps).map(|r| spec.rep_seed(r)).collect();
    Ok(ReplicationReport::new(&spec.name, spec.stand_in, metrics, seeds, rows))
}

/// Input and denoised GMSD per replication.
///
/// Metrics: `input_gmsd`, `tsme_gmsd` and their `ratio`.
pub fn run_gmsd(spec: &ScenarioSpec) -> Result<ReplicationReport> {
    spec.validate()?;
    let ScenarioKind::Gmsd { shape, neighbors } = spec.kind.clone() else {
        return Err(Error::InvalidParameter(format!("scenario {} is not a manifold scenario", spec.name)));
    };
    let oracle = ManifoldOracle::new(shape);
    let d = shape.intrinsic_dim();
    let rows = par_map(spec.reps, spec.jobs, |r| {
        let sample = spec.manifold_sample(r)?;
        let input = gmsd(&sample.noisy, &oracle);
        let embedding = isomap(&sample.noisy, neighbors, d)?;
        let rec = reconstruct(&embedding, &sample.noisy, &spec.chain_for(r, 1))?;
        let out = gmsd(&rec.denoised, &oracle);
        Ok(vec![input, out, out / input])
    })?;
    let metrics = ["input_gmsd", "tsme_gmsd", "ratio"].map(String::from).to_vec();
    let seeds = (0..spec.reps).map(|r| spec.rep_seed(r)).collect();
    Ok(ReplicationReport::new(&spec.name, spec.stand_in, metrics, seeds, rows))
}

/// Test error and knot counts across prior exponents, all exponents sharing
/// each replication's data and chain seed.
///
/// Metrics per exponent `g`: `cmse_g` (censored test MSE against the
/// noiseless function), `mse_g` and `mean_k_g`.
pub fn run_gamma_sweep(spec: &ScenarioSpec) -> Result<ReplicationReport> {
    spec.validate()?;
    let ScenarioKind::GammaSweep { case, gammas, test_size } = spec.kind.clone() else {
        return Err(Error::InvalidParameter(format!("scenario {} is not a prior sweep", spec.name)));
    };
    let mut metrics = Vec::new();
    for g in &gammas {
        metrics.extend([format!("cmse_{g}"), format!("mse_{g}"), format!("mean_k_{g}")]);
    }
    let rows = par_map(spec.reps, spec.jobs, |r| {
        let g = spec.dataset(r)?;
        let test = case.sample(test_size, 0.0, split_seed(spec.rep_seed(r), 3))?;
        let mut row = Vec::new();
        for &gamma in &gammas {
            let cfg = ChainConfig { gamma, ..spec.chain_for(r, 2) };
            let trace = run(&g.data, &cfg)?;
            let pred = predict(&trace, &g.data, test.data.columns())?.mean;
            row.push(censored_mse(&pred, &test.truth));
            row.push(mse(&pred, &test.truth));
            row.push(knot_number_histogram(&trace)?.mean_total);
        }
        Ok(row)
    })?;
    let seeds = (0..spec.reps).map(|r| spec.rep_seed(r)).collect();
    Ok(ReplicationReport::new(&spec.name, spec.stand_in, metrics, seeds, rows))
}

/// Dispatches on the scenario kind.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<ReplicationReport> {
    match spec.kind {
        ScenarioKind::Knots { .. } => run_knot_inference(spec),
        ScenarioKind::GammaSweep { .. } => run_gamma_sweep(spec),
        ScenarioKind::Gmsd { .. } => run_gmsd(spec),
    }
}
