use std::path::Path;
use std::time::Instant;

use ebars::data::Dataset;
use ebars::evidence::PosteriorMode;
use ebars::experiments::harness::format_f64;
use ebars::inference::{estimate_knots_fixed_k, knot_location_intensity, knot_number_histogram, predict};
use ebars::sampler::{run as run_chain, ChainTrace, MoveCounters};
use ebars::stats::{censored_mse, mse};
use serde::Serialize;

use crate::args::FitArgs;
use crate::error::{CliError, CliResult};
use crate::io::{numbered, output_dir, read_table, write_numeric, write_records, Table};
use crate::manifest::ManifestBuilder;

const INTENSITY_RESOLUTION: usize = 201;
const MAX_PREDICTION_POINTS: usize = 50_000;

/// Per-predictor affine map onto the unit interval.
#[derive(Debug, Clone, Serialize)]
struct Scaling {
    ranges: Vec<(f64, f64)>,
}

impl Scaling {
    fn identity(d: usize) -> Self {
        Self { ranges: vec![(0.0, 1.0); d] }
    }

    fn fitted(columns: &[Vec<f64>]) -> CliResult<Self> {
        let ranges = columns
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let lo = c.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if hi > lo { Ok((lo, hi)) } else { Err(CliError::data(format!("predictor {} is constant", j + 1))) }
            })
            .collect::<CliResult<_>>()?;
        Ok(Self { ranges })
    }

    fn to_unit(&self, columns: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        columns
            .into_iter()
            .zip(&self.ranges)
            .map(|(c, &(lo, hi))| c.into_iter().map(|x| unit(x, lo, hi)).collect())
            .collect()
    }

    fn from_unit(&self, j: usize, u: f64) -> f64 {
        let (lo, hi) = self.ranges[j];
        lo + u * (hi - lo)
    }
}

/// Endpoints of the range map exactly onto 0 and 1 despite rounding.
fn unit(x: f64, lo: f64, hi: f64) -> f64 {
    if x == hi { 1.0 } else { (x - lo) / (hi - lo) }
}

fn split_xy(table: &Table, path: &Path) -> CliResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let p = table.ncols();
    if p < 2 {
        return Err(CliError::data(format!("{}: need at least one predictor and a response column", path.display())));
    }
    if let Some(i) = table.rows.iter().position(|r| r.len() != p) {
        return Err(CliError::data(format!("{}: row {} has {} fields, header has {p}", path.display(), i + 2, table.rows[i].len())));
    }
    Ok(((0..p - 1).map(|j| table.column(j)).collect(), table.column(p - 1)))
}

/// Evaluation grid with `per_dim` points per coordinate, first coordinate slowest.
fn prediction_grid(d: usize) -> Vec<Vec<f64>> {
    let mut per_dim: usize = match d {
        1 => 201,
        2 => 51,
        _ => 11,
    };
    while per_dim > 2 && per_dim.checked_pow(d as u32).is_none_or(|n| n > MAX_PREDICTION_POINTS) {
        per_dim -= 1;
    }
    let total = per_dim.pow(d as u32);
    let mut cols = vec![Vec::with_capacity(total); d];
    for idx in 0..total {
        let mut rest = idx;
        for j in (0..d).rev() {
            cols[j].push((rest % per_dim) as f64 / (per_dim - 1) as f64);
            rest /= per_dim;
        }
    }
    cols
}

#[derive(Debug, Serialize)]
struct TestSummary {
    observations: usize,
    mse: f64,
    censored_mse: f64,
}

#[derive(Debug, Serialize)]
struct FitSummary {
    observations: usize,
    predictors: usize,
    mode: PosteriorMode,
    samples: usize,
    acceptance_rate: f64,
    counters: MoveCounters,
    mean_knots_total: f64,
    mean_knots_per_dim: Vec<f64>,
    intensity_bandwidths: Vec<f64>,
    /// Mean sorted knot locations among samples with the fixed counts, in
    /// the original predictor scale.
    fixed_k_knots: Option<Vec<Vec<f64>>>,
    scaling: Option<Scaling>,
    prediction_skipped_samples: usize,
    test: Option<TestSummary>,
}

fn write_samples(path: &Path, trace: &ChainTrace, scaling: &Scaling) -> CliResult<()> {
    let d = trace.grid.ndim();
    let mut header = vec!["sample".to_string(), "accepted".into(), "k_total".into()];
    header.extend(numbered("k", d));
    header.extend(numbered("knots", d));
    let rows = trace.samples.iter().zip(&trace.accepted).enumerate().map(|(i, (s, acc))| {
        let mut row = vec![i.to_string(), u8::from(*acc).to_string(), s.state.total_knots().to_string()];
        row.extend(s.state.counts().iter().map(|k| k.to_string()));
        row.extend((0..d).map(|j| {
            let locs: Vec<String> =
                s.state.locations(&trace.grid, j).iter().map(|&u| format_f64(scaling.from_unit(j, u))).collect();
            locs.join(" ")
        }));
        row
    });
    write_records(path, &header, rows)
}

pub fn run(args: FitArgs) -> CliResult<()> {
    let table = read_table(&args.input)?;
    let (columns, y) = split_xy(&table, &args.input)?;
    let d = columns.len();
    let config = args.chain.config(d)?;
    if let Some(h) = args.bandwidth {
        if !(h > 0.0) {
            return Err(CliError::Usage(format!("--bandwidth must be positive, got {h}")));
        }
    }
    let scaling = if args.rescale { Scaling::fitted(&columns)? } else { Scaling::identity(d) };
    let data = Dataset::new(scaling.to_unit(columns), y)?;
    let test = match &args.test {
        Some(path) => {
            let t = read_table(path)?;
            if t.ncols() != d + 1 {
                return Err(CliError::data(format!("{}: expected {} columns, found {}", path.display(), d + 1, t.ncols())));
            }
            let (cols, y) = split_xy(&t, path)?;
            Some(Dataset::new(scaling.to_unit(cols), y)?)
        }
        None => None,
    };

    let out = output_dir(args.out.clone())?;
    let mut manifest = ManifestBuilder::new("fit", serde_json::json!({ "args": &args, "chain": &config }))?;
    manifest.seed("chain", config.seed);
    manifest.input(&args.input);
    if let Some(p) = &args.test {
        manifest.input(p);
    }

    let t0 = Instant::now();
    let trace = run_chain(&data, &config)?;
    manifest.time("sampling_seconds", t0);

    let t1 = Instant::now();
    let hist = knot_number_histogram(&trace)?;
    let intensities = knot_location_intensity(&trace, INTENSITY_RESOLUTION, args.bandwidth)?;
    let fixed_k_knots = match &config.fixed_k {
        Some(k) => Some(
            estimate_knots_fixed_k(&trace, k)?
                .into_iter()
                .enumerate()
                .map(|(j, v)| v.into_iter().map(|u| scaling.from_unit(j, u)).collect())
                .collect(),
        ),
        None => None,
    };
    let grid = prediction_grid(d);
    let pred = predict(&trace, &data, &grid)?;
    let test_summary = match &test {
        Some(t) => {
            let p = predict(&trace, &data, t.columns())?;
            Some(TestSummary { observations: t.len(), mse: mse(&p.mean, t.y()), censored_mse: censored_mse(&p.mean, t.y()) })
        }
        None => None,
    };
    manifest.time("inference_seconds", t1);

    let samples_path = out.join("samples.csv");
    write_samples(&samples_path, &trace, &scaling)?;

    let counts_path = out.join("knot_counts.csv");
    let kmax = hist.per_dim.iter().map(Vec::len).chain([hist.total.len()]).max().unwrap_or(0);
    let at = |h: &[f64], k: usize| h.get(k).copied().unwrap_or(0.0);
    let mut header = vec!["k".to_string(), "total".into()];
    header.extend(numbered("dim", d));
    let rows: Vec<Vec<f64>> = (0..kmax)
        .map(|k| {
            let mut r = vec![k as f64, at(&hist.total, k)];
            r.extend(hist.per_dim.iter().map(|h| at(h, k)));
            r
        })
        .collect();
    write_records(
        &counts_path,
        &header,
        rows.iter().map(|r| {
            std::iter::once((r[0] as usize).to_string()).chain(r[1..].iter().map(|v| format_f64(*v))).collect()
        }),
    )?;

    let intensity_path = out.join("knot_intensity.csv");
    let mut header = vec!["u".to_string()];
    header.extend(numbered("intensity", d));
    let rows: Vec<Vec<f64>> = (0..INTENSITY_RESOLUTION)
        .map(|i| std::iter::once(intensities[0].grid[i]).chain(intensities.iter().map(|f| f.values[i])).collect())
        .collect();
    write_numeric(&intensity_path, &header, &rows)?;

    let pred_path = out.join("predictions.csv");
    let mut header: Vec<String> = table.header[..d].to_vec();
    header.extend(["mean".to_string(), "sd".into()]);
    let rows: Vec<Vec<f64>> = (0..pred.mean.len())
        .map(|i| {
            let mut r: Vec<f64> = (0..d).map(|j| scaling.from_unit(j, grid[j][i])).collect();
            r.extend([pred.mean[i], pred.sd[i]]);
            r
        })
        .collect();
    write_numeric(&pred_path, &header, &rows)?;

    let summary = FitSummary {
        observations: data.len(),
        predictors: d,
        mode: config.mode,
        samples: trace.len(),
        acceptance_rate: trace.counters.acceptance_rate(),
        counters: trace.counters,
        mean_knots_total: hist.mean_total,
        mean_knots_per_dim: hist.mean_per_dim.clone(),
        intensity_bandwidths: intensities.iter().map(|f| f.bandwidth).collect(),
        fixed_k_knots,
        scaling: args.rescale.then_some(scaling),
        prediction_skipped_samples: pred.skipped,
        test: test_summary,
    };
    let summary_path = out.join("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)?)?;

    for p in [&samples_path, &counts_path, &intensity_path, &pred_path, &summary_path] {
        manifest.output(p);
    }
    manifest.write(&out)?;

    println!(
        "fit: {} samples, acceptance {:.3}, mean knots {:?}",
        summary.samples, summary.acceptance_rate, summary.mean_knots_per_dim
    );
    if let Some(t) = &summary.test {
        println!("test mse {:.6} on {} observations", t.mse, t.observations);
    }
    println!("wrote {}", out.display());
    Ok(())
}
