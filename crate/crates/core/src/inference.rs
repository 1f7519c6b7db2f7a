//! Posterior summaries of a chain trace: knot-count histograms, knot-location
//! intensities, fixed-k location estimates and model-averaged prediction.

use std::collections::HashMap;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::basis::tensor_design_matrix;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evidence::fit;
use crate::model_space::KnotState;
use crate::sampler::ChainTrace;
use crate::stats;

/// Smallest bandwidth the Silverman default may return.
pub const MIN_BANDWIDTH: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotNumberHistogram {
    /// `total[k]` is the posterior mass of `sum_i k_i = k`.
    pub total: Vec<f64>,
    /// `per_dim[i][k]` is the posterior mass of `k_i = k`.
    pub per_dim: Vec<Vec<f64>>,
    pub mean_total: f64,
    pub mean_per_dim: Vec<f64>,
}

pub fn knot_number_histogram(trace: &ChainTrace) -> Result<KnotNumberHistogram> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let d = trace.grid.ndim();
    let s = trace.len() as f64;
    let mut total = Vec::new();
    let mut per_dim = vec![Vec::new(); d];
    let bump = |h: &mut Vec<f64>, k: usize| {
        if h.len() <= k {
            h.resize(k + 1, 0.0);
        }
        h[k] += 1.0 / s;
    };
    for state in trace.states() {
        bump(&mut total, state.total_knots());
        for (i, h) in per_dim.iter_mut().enumerate() {
            bump(h, state.indices(i).len());
        }
    }
    let mean = |h: &[f64]| h.iter().enumerate().map(|(k, p)| k as f64 * p).sum::<f64>();
    Ok(KnotNumberHistogram {
        mean_total: mean(&total),
        mean_per_dim: per_dim.iter().map(|h| mean(h)).collect(),
        total,
        per_dim,
    })
}

/// Smoothed knot intensity on `[0, 1]` for one dimension.
///
/// Each sampled knot contributes a Gaussian kernel truncated to `[0, 1]` and
/// renormalised to unit mass, so the intensity integrates to the posterior
/// mean knot count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotIntensity {
    pub bandwidth: f64,
    /// Distinct sampled locations and their mean count per sample.
    pub atoms: Vec<(f64, f64)>,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

impl KnotIntensity {
    fn kernel_mass(&self, loc: f64, lo: f64, hi: f64) -> f64 {
        let h = self.bandwidth;
        let within = std_normal_cdf((1.0 - loc) / h) - std_normal_cdf(-loc / h);
        (std_normal_cdf((hi - loc) / h) - std_normal_cdf((lo - loc) / h)) / within
    }

    /// Intensity at `x`.
    pub fn at(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let norm = 1.0 / (h * (2.0 * std::f64::consts::PI).sqrt());
        self.atoms
            .iter()
            .map(|&(loc, w)| {
                let within = std_normal_cdf((1.0 - loc) / h) - std_normal_cdf(-loc / h);
                w * norm * (-0.5 * ((x - loc) / h).powi(2)).exp() / within
            })
            .sum()
    }

    /// Expected number of knots in `[lo, hi] ∩ [0, 1]`, computed exactly.
    pub fn window_integral(&self, lo: f64, hi: f64) -> f64 {
        let (lo, hi) = (lo.max(0.0), hi.min(1.0));
        if hi <= lo {
            return 0.0;
        }
        self.atoms.iter().map(|&(loc, w)| w * self.kernel_mass(loc, lo, hi)).sum()
    }

    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|&(_, w)| w).sum()
    }
}

/// Silverman's rule `0.9 min(sd, IQR / 1.34) N^(-1/5)`, floored at
/// [`MIN_BANDWIDTH`].
pub fn silverman_bandwidth(locations: &[f64]) -> f64 {
    if locations.len() < 2 {
        return MIN_BANDWIDTH.max(0.05);
    }
    let spread = stats::sd(locations);
    let iqr = stats::quantile(locations, 0.75) - stats::quantile(locations, 0.25);
    let scale = if iqr > 0.0 { spread.min(iqr / 1.34) } else { spread };
    (0.9 * scale * (locations.len() as f64).powf(-0.2)).max(MIN_BANDWIDTH)
}

/// Per-dimension knot intensities evaluated on `resolution` equally spaced
/// points of `[0, 1]`. `bandwidth = None` selects Silverman's rule on the
/// pooled sampled locations of that dimension.
pub fn knot_location_intensity(
    trace: &ChainTrace,
    resolution: usize,
    bandwidth: Option<f64>,
) -> Result<Vec<KnotIntensity>> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if let Some(h) = bandwidth {
        if !(h > 0.0) {
            return Err(Error::InvalidParameter(format!("bandwidth {h} must be positive")));
        }
    }
    if resolution < 2 {
        return Err(Error::InvalidParameter("intensity grid needs at least two points".into()));
    }
    let s = trace.len() as f64;
    let grid: Vec<f64> = (0..resolution).map(|i| i as f64 / (resolution - 1) as f64).collect();
    (0..trace.grid.ndim())
        .map(|dim| {
            let eta = trace.grid.locations(dim);
            let mut counts = vec![0usize; eta.len()];
            for state in trace.states() {
                for &j in state.indices(dim) {
                    counts[j] += 1;
                }
            }
            let atoms: Vec<(f64, f64)> = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(j, &c)| (eta[j], c as f64 / s))
                .collect();
            let h = match bandwidth {
                Some(h) => h,
                None => {
                    let pooled: Vec<f64> = counts
                        .iter()
                        .enumerate()
                        .flat_map(|(j, &c)| std::iter::repeat_n(eta[j], c))
                        .collect();
                    silverman_bandwidth(&pooled)
                }
            };
            let mut intensity = KnotIntensity { bandwidth: h, atoms, grid: grid.clone(), values: Vec::new() };
            intensity.values = grid.iter().map(|&x| intensity.at(x)).collect();
            Ok(intensity)
        })
        .collect()
}

/// Position-wise mean of the sorted knot locations over samples whose knot
/// counts equal `k_true`.
pub fn estimate_knots_fixed_k(trace: &ChainTrace, k_true: &[usize]) -> Result<Vec<Vec<f64>>> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let d = trace.grid.ndim();
    if k_true.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: k_true.len() });
    }
    let mut sums: Vec<Vec<f64>> = k_true.iter().map(|&k| vec![0.0; k]).collect();
    let mut matched = 0usize;
    for state in trace.states().filter(|s| s.counts() == k_true) {
        matched += 1;
        for (dim, sum) in sums.iter_mut().enumerate() {
            // candidate indices are sorted, and so are their locations
            for (acc, loc) in sum.iter_mut().zip(state.locations(&trace.grid, dim)) {
                *acc += loc;
            }
        }
    }
    if matched == 0 {
        return Err(Error::NoMatchingSamples(k_true.to_vec()));
    }
    Ok(sums
        .into_iter()
        .map(|v| {
            let mut est: Vec<f64> = v.into_iter().map(|x| x / matched as f64).collect();
            est.sort_by(f64::total_cmp);
            est
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    /// Evaluation points, one inner vector per coordinate.
    pub points: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Recorded samples skipped because their design was rank deficient.
    pub skipped: usize,
}

/// Bayesian model average of the posterior-mean fits `Z_new (m / (m + 1)) beta_hat`.
///
/// `x_new` holds one vector per coordinate.
pub fn predict(trace: &ChainTrace, data: &Dataset, x_new: &[Vec<f64>]) -> Result<PredictionResult> {
    if trace.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let d = trace.grid.ndim();
    if x_new.len() != d || data.ndim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: x_new.len().min(data.ndim()) });
    }
    let n_new = x_new[0].len();

    let mut weights: HashMap<&KnotState, usize> = HashMap::new();
    for state in trace.states() {
        *weights.entry(state).or_default() += 1;
    }
    // deterministic summation order
    let mut distinct: Vec<(&KnotState, usize)> = weights.into_iter().collect();
    distinct.sort_by(|a, b| a.0.cmp(b.0));

    // weighted Welford accumulation
    let mut mean = vec![0.0; n_new];
    let mut m2 = vec![0.0; n_new];
    let mut used = 0usize;
    let mut skipped = 0usize;
    for (state, w) in distinct {
        let kvs = state.knot_vectors(&trace.grid, &trace.degrees)?;
        let model = fit(&tensor_design_matrix(&kvs, data.columns())?, data.y())?;
        if model.is_rank_deficient() {
            skipped += w;
            continue;
        }
        let z_new = tensor_design_matrix(&kvs, x_new)?;
        let f: DVector<f64> = z_new.values() * model.shrunk_beta();
        used += w;
        let share = w as f64 / used as f64;
        for (i, &v) in f.iter().enumerate() {
            let delta = v - mean[i];
            mean[i] += share * delta;
            m2[i] += w as f64 * delta * (v - mean[i]);
        }
    }
    if used == 0 {
        return Err(Error::Numerical("every recorded state is rank deficient".into()));
    }
    let sd = m2.iter().map(|s| (s / used as f64).max(0.0).sqrt()).collect();
    Ok(PredictionResult { points: x_new.to_vec(), mean, sd, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_space::CandidateGrid;
    use crate::sampler::{MoveCounters, PosteriorSample};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trace_of(grid: CandidateGrid, degrees: Vec<usize>, states: Vec<Vec<Vec<usize>>>) -> ChainTrace {
        let samples = states
            .into_iter()
            .map(|idx| PosteriorSample { state: KnotState::new(idx, &grid).unwrap(), coefficients: None })
            .collect();
        ChainTrace { grid, degrees, samples, accepted: vec![], counters: MoveCounters::default() }
    }

    fn grid1(n: usize) -> CandidateGrid {
        CandidateGrid::uniform(&[n]).unwrap()
    }

    #[test]
    fn histogram_basics() {
        let t = trace_of(grid1(9), vec![1], vec![vec![vec![1, 2]]; 5]);
        let h = knot_number_histogram(&t).unwrap();
        assert_eq!(h.total, vec![0.0, 0.0, 1.0]);
        assert_eq!(h.mean_total, 2.0);

        let t = trace_of(grid1(9), vec![1], vec![vec![vec![4]], vec![vec![1, 4, 7]]]);
        let h = knot_number_histogram(&t).unwrap();
        assert_eq!(h.mean_total, 2.0);
        assert!((h.total.iter().sum::<f64>() - 1.0).abs() < 1e-15);

        let empty = trace_of(grid1(9), vec![1], vec![]);
        assert!(matches!(knot_number_histogram(&empty), Err(Error::EmptyTrace)));
    }

    #[test]
    fn single_atom_intensity() {
        let t = trace_of(grid1(9), vec![1], vec![vec![vec![4]]; 10]);
        let k = &knot_location_intensity(&t, 201, Some(0.02)).unwrap()[0];
        assert!((k.window_integral(0.0, 1.0) - 1.0).abs() < 1e-12);
        assert!(k.window_integral(0.45, 0.55) > 0.98);
        let peak = k.values.iter().cloned().enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        assert!((k.grid[peak] - 0.5).abs() < 1e-12);
        // trapezoid on the grid agrees with the analytic integral
        let dx = 1.0 / 200.0;
        let trap: f64 = k.values.windows(2).map(|w| (w[0] + w[1]) * dx / 2.0).sum();
        assert!((trap - 1.0).abs() < 1e-3);
        assert!(knot_location_intensity(&t, 201, Some(0.0)).is_err());
        assert!(knot_location_intensity(&t, 201, Some(-1.0)).is_err());
    }

    #[test]
    fn uniform_trace_is_roughly_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let states: Vec<Vec<Vec<usize>>> = (0..4000).map(|_| vec![vec![rng.random_range(0..99)]]).collect();
        let t = trace_of(grid1(99), vec![1], states);
        let k = &knot_location_intensity(&t, 101, Some(0.05)).unwrap()[0];
        assert!((k.total() - 1.0).abs() < 1e-12);
        for (x, v) in k.grid.iter().zip(&k.values) {
            if (0.1..=0.9).contains(x) {
                assert!((v - 1.0).abs() < 0.15, "{x}: {v}");
            }
        }
    }

    #[test]
    fn silverman_default_and_floor() {
        let t = trace_of(grid1(9), vec![1], vec![vec![vec![4]]; 10]);
        let k = &knot_location_intensity(&t, 11, None).unwrap()[0];
        assert_eq!(k.bandwidth, MIN_BANDWIDTH);
        let h = silverman_bandwidth(&[0.1, 0.2, 0.3, 0.4, 0.5]);
        assert!(h > 0.05 && h < 0.2);
    }

    #[test]
    fn fixed_k_estimates() {
        let g = grid1(9);
        let t = trace_of(g, vec![1], vec![vec![vec![3]], vec![vec![5]], vec![vec![2, 6]]]);
        // symmetric around 0.5
        assert_eq!(estimate_knots_fixed_k(&t, &[1]).unwrap(), vec![vec![0.5]]);
        assert_eq!(estimate_knots_fixed_k(&t, &[2]).unwrap(), vec![vec![0.3, 0.7]]);
        assert!(matches!(estimate_knots_fixed_k(&t, &[3]), Err(Error::NoMatchingSamples(_))));
    }

    #[test]
    fn fixed_k_estimates_follow_locations_not_indices() {
        // same locations, reached through grids with different index layouts
        let a = CandidateGrid::new(vec![vec![0.2, 0.4, 0.6]]).unwrap();
        let b = CandidateGrid::new(vec![vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]]).unwrap();
        let ta = trace_of(a, vec![1], vec![vec![vec![0, 2]], vec![vec![1, 2]]]);
        let tb = trace_of(b, vec![1], vec![vec![vec![1, 5]], vec![vec![3, 5]]]);
        assert_eq!(estimate_knots_fixed_k(&ta, &[2]).unwrap(), estimate_knots_fixed_k(&tb, &[2]).unwrap());
    }

    #[test]
    fn constant_data_predicts_shrunk_constant() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let data = Dataset::new(vec![xs], vec![3.0; 30]).unwrap();
        let t = trace_of(grid1(9), vec![3], vec![vec![vec![2]], vec![vec![4, 6]], vec![vec![]]]);
        let x_new = vec![vec![0.0, 0.33, 0.5, 0.91, 1.0]];
        let p = predict(&t, &data, &x_new).unwrap();
        for (m, s) in p.mean.iter().zip(&p.sd) {
            assert!((m - 3.0 * 30.0 / 31.0).abs() < 1e-10);
            assert!(*s < 1e-10);
        }
        assert_eq!(p.skipped, 0);
    }

    #[test]
    fn single_sample_prediction_is_that_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let xs: Vec<f64> = (0..40).map(|_| rng.random()).collect();
        let y: Vec<f64> = xs.iter().map(|x| x * x + rng.random::<f64>() * 0.1).collect();
        let data = Dataset::new(vec![xs.clone()], y.clone()).unwrap();
        let g = grid1(9);
        let t = trace_of(g.clone(), vec![1], vec![vec![vec![4]]]);
        let p = predict(&t, &data, &[xs.clone()]).unwrap();
        let kv = KnotState::new(vec![vec![4]], &g).unwrap().knot_vector(&g, 0, 1).unwrap();
        let z = crate::basis::design_matrix_1d(&kv, &xs).unwrap();
        let f = z.values() * fit(&z, &y).unwrap().shrunk_beta();
        for (a, b) in p.mean.iter().zip(f.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn deficient_states_are_skipped() {
        let xs: Vec<f64> = vec![0.05, 0.1, 0.15, 0.2, 0.8, 0.9];
        let data = Dataset::new(vec![xs], vec![1.0, 2.0, 1.0, 2.0, 0.0, 1.0]).unwrap();
        // knots at 0.4, 0.5, 0.6 leave linear hats without data
        let t = trace_of(grid1(9), vec![1], vec![vec![vec![3, 4, 5]], vec![vec![]], vec![vec![]]]);
        let p = predict(&t, &data, &[vec![0.5]]).unwrap();
        assert_eq!(p.skipped, 1);
        let only_bad = trace_of(grid1(9), vec![1], vec![vec![vec![3, 4, 5]]]);
        assert!(predict(&only_bad, &data, &[vec![0.5]]).is_err());
    }

    proptest! {
        #[test]
        fn summaries_invariant_under_permutation(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let states: Vec<Vec<Vec<usize>>> = (0..30)
                .map(|_| {
                    let k = rng.random_range(0..4);
                    vec![rand::seq::index::sample(&mut rng, 12, k).into_vec()]
                })
                .collect();
            let mut shuffled = states.clone();
            rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
            let a = trace_of(grid1(12), vec![1], states);
            let b = trace_of(grid1(12), vec![1], shuffled);
            prop_assert_eq!(knot_number_histogram(&a).unwrap(), knot_number_histogram(&b).unwrap());
            let ia = knot_location_intensity(&a, 21, Some(0.03)).unwrap();
            let ib = knot_location_intensity(&b, 21, Some(0.03)).unwrap();
            prop_assert_eq!(&ia, &ib);
            prop_assert!((ia[0].window_integral(0.0, 1.0) - knot_number_histogram(&a).unwrap().mean_total).abs() < 1e-12);
        }

        #[test]
        fn prediction_is_linear_in_y(seed in any::<u64>(), alpha in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let xs: Vec<f64> = (0..25).map(|_| rng.random()).collect();
            let y1: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
            let y2: Vec<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
            let mix: Vec<f64> = y1.iter().zip(&y2).map(|(a, b)| a + alpha * b).collect();
            let t = trace_of(grid1(5), vec![1], vec![vec![vec![1]], vec![vec![2, 3]], vec![vec![1]]]);
            let x_new = vec![vec![0.1, 0.45, 0.8]];
            let pred = |y: Vec<f64>| predict(&t, &Dataset::new(vec![xs.clone()], y).unwrap(), &x_new).unwrap().mean;
            let (p1, p2, pm) = (pred(y1), pred(y2), pred(mix));
            for i in 0..3 {
                prop_assert!((pm[i] - (p1[i] + alpha * p2[i])).abs() < 1e-9);
            }
        }
    }
}
