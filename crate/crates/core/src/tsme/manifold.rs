//! Parametric test manifolds, noisy samplers, and nearest-point distance
//! oracles.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ManifoldShape {
    /// `(r cos t, r sin t)` with `r = a + b t`.
    Spiral { a: f64, b: f64, t_min: f64, t_max: f64 },
    /// `(t cos t, h, t sin t)`.
    SwissRoll { t_min: f64, t_max: f64, h_min: f64, h_max: f64 },
}

impl ManifoldShape {
    /// Archimedean spiral with one and a half turns starting at radius 1. Arms
    /// are `2π` apart, far beyond the reach of 20 nearest neighbours.
    pub const SPIRAL: Self = Self::Spiral { a: 1.0, b: 1.0, t_min: 0.0, t_max: 3.0 * std::f64::consts::PI };

    /// Half a turn of roll at radius `3π..4π`, height 10. The radius keeps the
    /// hole wide enough that noisy points do not bridge it.
    pub const SWISS_ROLL: Self = Self::SwissRoll {
        t_min: 3.0 * std::f64::consts::PI,
        t_max: 4.0 * std::f64::consts::PI,
        h_min: 0.0,
        h_max: 10.0,
    };

    pub fn ambient_dim(&self) -> usize {
        match self {
            Self::Spiral { .. } => 2,
            Self::SwissRoll { .. } => 3,
        }
    }

    pub fn intrinsic_dim(&self) -> usize {
        match self {
            Self::Spiral { .. } => 1,
            Self::SwissRoll { .. } => 2,
        }
    }

    /// Parameter box, one `(lo, hi)` per intrinsic coordinate.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        match *self {
            Self::Spiral { t_min, t_max, .. } => vec![(t_min, t_max)],
            Self::SwissRoll { t_min, t_max, h_min, h_max } => vec![(t_min, t_max), (h_min, h_max)],
        }
    }

    pub fn point(&self, params: &[f64]) -> Vec<f64> {
        match *self {
            Self::Spiral { a, b, .. } => {
                let t = params[0];
                let r = a + b * t;
                vec![r * t.cos(), r * t.sin()]
            }
            Self::SwissRoll { .. } => {
                let (t, h) = (params[0], params[1]);
                vec![t * t.cos(), h, t * t.sin()]
            }
        }
    }

    /// Squared distance from `x` to the point with the given curve parameter,
    /// minimised over any remaining parameters in closed form.
    fn profile(&self, x: &[f64], t: f64) -> f64 {
        match *self {
            Self::Spiral { .. } => sq_dist(x, &self.point(&[t])),
            Self::SwissRoll { h_min, h_max, .. } => {
                let h = x[1].clamp(h_min, h_max);
                sq_dist(x, &self.point(&[t, h]))
            }
        }
    }

    /// Draws `m` parameters uniformly from the parameter box and adds
    /// independent `N(0, noise_sd^2)` noise to every ambient coordinate.
    pub fn sample(&self, m: usize, noise_sd: f64, seed: u64) -> Result<ManifoldSample> {
        if !(noise_sd >= 0.0) {
            return Err(Error::InvalidParameter(format!("noise sd {noise_sd} must be non-negative")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let bounds = self.bounds();
        let mut params = Vec::with_capacity(m);
        let mut clean = Vec::with_capacity(m);
        let mut noisy = Vec::with_capacity(m);
        for _ in 0..m {
            let p: Vec<f64> = bounds.iter().map(|&(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect();
            let w = self.point(&p);
            noisy.push(w.iter().map(|v| v + noise.sample(&mut rng)).collect());
            clean.push(w);
            params.push(p);
        }
        Ok(ManifoldSample { params, clean: PointCloud::new(clean)?, noisy: PointCloud::new(noisy)? })
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldSample {
    /// Hidden generator parameters of each point.
    pub params: Vec<Vec<f64>>,
    pub clean: PointCloud,
    pub noisy: PointCloud,
}

/// Nearest-point queries against a manifold placed by a rigid motion
/// `x -> R x + c`.
#[derive(Debug, Clone)]
pub struct ManifoldOracle {
    shape: ManifoldShape,
    rotation: DMatrix<f64>,
    offset: DVector<f64>,
    table: Vec<(Vec<f64>, Vec<f64>)>,
}

impl ManifoldOracle {
    /// Dense tables: `1e5` parameter samples for curves, a `400 x 400` grid
    /// for surfaces.
    pub fn new(shape: ManifoldShape) -> Self {
        let res = match shape.intrinsic_dim() {
            1 => vec![100_000],
            _ => vec![400, 400],
        };
        Self::with_resolution(shape, &res)
    }

    pub fn with_resolution(shape: ManifoldShape, resolution: &[usize]) -> Self {
        let bounds = shape.bounds();
        let axes: Vec<Vec<f64>> = bounds
            .iter()
            .zip(resolution)
            .map(|(&(lo, hi), &n)| (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64).collect())
            .collect();
        let mut table = Vec::new();
        let mut idx = vec![0usize; axes.len()];
        'outer: loop {
            let p: Vec<f64> = idx.iter().zip(&axes).map(|(&i, a)| a[i]).collect();
            table.push((shape.point(&p), p));
            for k in (0..idx.len()).rev() {
                idx[k] += 1;
                if idx[k] < axes[k].len() {
                    continue 'outer;
                }
                idx[k] = 0;
            }
            break;
        }
        let dim = shape.ambient_dim();
        Self { shape, rotation: DMatrix::identity(dim, dim), offset: DVector::zeros(dim), table }
    }

    pub fn shape(&self) -> &ManifoldShape {
        &self.shape
    }

    /// The same manifold moved by `x -> R x + c` (applied after any existing
    /// motion). `R` must be orthogonal.
    pub fn transformed(&self, rotation: &DMatrix<f64>, translation: &[f64]) -> Result<Self> {
        let dim = self.shape.ambient_dim();
        if rotation.shape() != (dim, dim) || translation.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: translation.len() });
        }
        let orth = (rotation.transpose() * rotation - DMatrix::identity(dim, dim)).abs().max();
        if orth > 1e-9 {
            return Err(Error::InvalidParameter("rotation is not orthogonal".into()));
        }
        let mut out = self.clone();
        out.rotation = rotation * &self.rotation;
        out.offset = rotation * &self.offset + DVector::from_column_slice(translation);
        Ok(out)
    }

    /// Squared Euclidean distance from `x` to the manifold.
    pub fn distance2(&self, x: &[f64]) -> f64 {
        let local = self.rotation.transpose() * (DVector::from_column_slice(x) - &self.offset);
        let x = local.as_slice();
        let (_, best) = self
            .table
            .iter()
            .map(|(w, p)| (sq_dist(x, w), p))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("oracle table is never empty");
        // refine the curve parameter around the best node by golden-section search
        let (t_lo, t_hi) = self.shape.bounds()[0];
        let step = match self.shape {
            ManifoldShape::Spiral { .. } => (t_hi - t_lo) / (self.table.len() - 1).max(1) as f64,
            ManifoldShape::SwissRoll { .. } => {
                let n = (self.table.len() as f64).sqrt().round().max(2.0);
                (t_hi - t_lo) / (n - 1.0)
            }
        };
        let mut lo = (best[0] - 2.0 * step).max(t_lo);
        let mut hi = (best[0] + 2.0 * step).min(t_hi);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = hi - g * (hi - lo);
        let mut d = lo + g * (hi - lo);
        let (mut fc, mut fd) = (self.shape.profile(x, c), self.shape.profile(x, d));
        for _ in 0..80 {
            if fc < fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - g * (hi - lo);
                fc = self.shape.profile(x, c);
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + g * (hi - lo);
                fd = self.shape.profile(x, d);
            }
        }
        let start = self.shape.profile(x, best[0]);
        fc.min(fd).min(start)
    }

    /// Mean squared distance of the points to the manifold.
    pub fn gmsd(&self, points: &PointCloud) -> f64 {
        let m = points.len();
        let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(m.max(1));
        let chunk = m.div_ceil(threads).max(1);
        let rows = points.rows();
        let partial: Vec<f64> = std::thread::scope(|scope| {
            let handles: Vec<_> = rows
                .chunks(chunk)
                .map(|block| scope.spawn(move || block.iter().map(|p| self.distance2(p)).sum::<f64>()))
                .collect();
            handles.into_iter().map(|h| h.join().expect("distance worker panicked")).collect()
        });
        partial.iter().sum::<f64>() / m as f64
    }
}

/// Geometric mean squared distance of `points` to the oracle's manifold.
pub fn gmsd(points: &PointCloud, oracle: &ManifoldOracle) -> f64 {
    oracle.gmsd(points)
}
