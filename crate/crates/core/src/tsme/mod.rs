//! Two-stage manifold denoising.
//!
//! Stage one embeds the noisy points with ISOMAP, giving coordinates
//! `u_i ∈ [0, 1]^d`. Stage two regresses every ambient coordinate on `u` with
//! the free-knot spline sampler and replaces each point by the fitted values
//! at its own `u_i`. The embedding is never revisited after stage one.

pub mod isomap;
pub mod manifold;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::inference::predict;
use crate::sampler::{run, ChainConfig, ChainTrace};
use crate::stats::split_seed;

pub use isomap::{isomap, Embedding};
pub use manifold::{gmsd, ManifoldOracle, ManifoldSample, ManifoldShape};

/// `m` points in `R^D`, stored by row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    rows: Vec<Vec<f64>>,
}

impl PointCloud {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::InvalidParameter("point cloud is empty".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidParameter("points have no coordinates".into()));
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("point cloud has non-finite coordinates".into()));
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn column(&self, l: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[l]).collect()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.rows[i].iter().zip(&self.rows[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub denoised: PointCloud,
    /// One chain per ambient coordinate.
    pub traces: Vec<ChainTrace>,
}

/// Chain settings for regressing on a `d`-dimensional embedding: cubic splines
/// with 100 candidates for `d = 1`, and `20 x 20` candidates for `d = 2`.
pub fn default_chain_config(d: usize) -> ChainConfig {
    ChainConfig::new(d)
}

/// Fits every ambient coordinate against the embedding and predicts at the
/// embedded points. Coordinate `l` uses seed `split_seed(config.seed, l)`.
pub fn reconstruct(embedding: &Embedding, points: &PointCloud, config: &ChainConfig) -> Result<Reconstruction> {
    if embedding.coords.len() != points.len() {
        return Err(Error::DimensionMismatch { expected: points.len(), got: embedding.coords.len() });
    }
    let d = embedding.dim();
    if config.ndim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: config.ndim() });
    }
    let u: Vec<Vec<f64>> = (0..d).map(|j| embedding.column(j)).collect();
    let dims = points.ambient_dim();

    let results: Vec<Result<(Vec<f64>, ChainTrace)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..dims)
            .map(|l| {
                let u = &u;
                let cfg = ChainConfig { seed: split_seed(config.seed, l as u64), ..config.clone() };
                scope.spawn(move || {
                    let data = Dataset::new(u.clone(), points.column(l))?;
                    let trace = run(&data, &cfg)?;
                    let fitted = predict(&trace, &data, u)?.mean;
                    Ok((fitted, trace))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("reconstruction worker panicked")).collect()
    });

    let mut columns = Vec::with_capacity(dims);
    let mut traces = Vec::with_capacity(dims);
    for r in results {
        let (col, trace) = r?;
        columns.push(col);
        traces.push(trace);
    }
    let rows = (0..points.len()).map(|i| columns.iter().map(|c| c[i]).collect()).collect();
    Ok(Reconstruction { denoised: PointCloud::new(rows)?, traces })
}

/// ISOMAP embedding followed by [`reconstruct`].
pub fn denoise(
    points: &PointCloud,
    neighbors: usize,
    intrinsic_dim: usize,
    config: &ChainConfig,
) -> Result<(Embedding, Reconstruction)> {
    let embedding = isomap(points, neighbors, intrinsic_dim)?;
    let rec = reconstruct(&embedding, points, config)?;
    Ok((embedding, rec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::spearman;

    fn quick(d: usize) -> ChainConfig {
        ChainConfig { burn_in: 500, steps: 500, candidates: vec![30; d], ..ChainConfig::new(d) }
    }

    #[test]
    fn point_cloud_validation() {
        assert!(PointCloud::new(vec![]).is_err());
        assert!(PointCloud::new(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
        assert!(PointCloud::new(vec![vec![f64::NAN]]).is_err());
        let c = PointCloud::new(vec![vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(c.distance(0, 1), 5.0);
        assert_eq!(c.column(1), vec![0.0, 4.0]);
    }

    #[test]
    fn noiseless_curve_is_reproduced() {
        // a coordinate-aligned parabola segment
        let rows: Vec<Vec<f64>> = (0..200).map(|i| {
            let t = i as f64 / 199.0;
            vec![t, t * t]
        }).collect();
        let cloud = PointCloud::new(rows).unwrap();
        let (emb, rec) = denoise(&cloud, 8, 1, &quick(1)).unwrap();
        assert!(spearman(&emb.column(0), &cloud.column(0)).abs() > 0.999);
        let num: f64 = cloud.rows().iter().zip(rec.denoised.rows()).map(|(a, b)| {
            a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>()
        }).sum();
        let den: f64 = cloud.rows().iter().map(|a| a.iter().map(|x| x * x).sum::<f64>()).sum();
        assert!((num / den).sqrt() < 0.05);
    }

    #[test]
    fn constant_coordinate_stays_constant() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64 / 10.0, 2.0]).collect();
        let cloud = PointCloud::new(rows).unwrap();
        let (emb, rec) = denoise(&cloud, 5, 1, &quick(1)).unwrap();
        let shrunk = 2.0 * 100.0 / 101.0;
        assert!(rec.denoised.column(1).iter().all(|v| (v - shrunk).abs() < 1e-9));
        // the embedding is untouched by the second stage
        assert_eq!(emb, isomap(&cloud, 5, 1).unwrap());
    }

    #[test]
    fn spiral_embedding_follows_the_parameter() {
        let s = ManifoldShape::SPIRAL.sample(1000, 0.2, 4).unwrap();
        let e = isomap(&s.noisy, 10, 1).unwrap();
        let t: Vec<f64> = s.params.iter().map(|p| p[0]).collect();
        let r = spearman(&e.column(0), &t);
        assert!(r.abs() > 0.99, "rank correlation {r}");
    }
}
