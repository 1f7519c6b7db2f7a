//! Synthetic regression data.
//!
//! The knot cases are piecewise linear with fixed breakpoints. The curve and
//! surface cases are stand-ins chosen by smoothness class: two smooth, one
//! with a single jump, one with several jumps. Every noiseless function here
//! is pinned by golden-value tests; changing one is a breaking change.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Smallest sample size accepted by the generators.
pub const MIN_SAMPLES: usize = 20;

/// A generated dataset together with its noiseless response.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub data: Dataset,
    /// Noiseless function values at the sampled inputs.
    pub truth: Vec<f64>,
    pub noise_sd: f64,
}

/// A discontinuity of a generator: coordinate, location and signed size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub dim: usize,
    pub at: f64,
    pub size: f64,
}

fn sample_with(
    ndim: usize,
    m: usize,
    noise_sd: f64,
    seed: u64,
    f: impl Fn(&[f64]) -> f64,
) -> Result<Generated> {
    if m < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!("sample size {m} is below {MIN_SAMPLES}")));
    }
    if !(noise_sd >= 0.0) || !noise_sd.is_finite() {
        return Err(Error::InvalidParameter(format!("noise sd {noise_sd} must be non-negative")));
    }
    let noise = Normal::new(0.0, noise_sd).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut columns = vec![Vec::with_capacity(m); ndim];
    let mut truth = Vec::with_capacity(m);
    let mut y = Vec::with_capacity(m);
    let mut x = vec![0.0; ndim];
    for _ in 0..m {
        for (xi, col) in x.iter_mut().zip(columns.iter_mut()) {
            *xi = rng.random::<f64>();
            col.push(*xi);
        }
        let v = f(&x);
        truth.push(v);
        y.push(v + noise.sample(&mut rng));
    }
    Ok(Generated { data: Dataset::new(columns, y)?, truth, noise_sd })
}

/// Linear interpolation through `(xs[i], ys[i])`, `xs` increasing.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let i = xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1);
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

fn step(x: f64, at: f64) -> f64 {
    if x >= at {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearCase {
    K1,
    K2,
    K4,
}

impl LinearCase {
    pub const ALL: [Self; 3] = [Self::K1, Self::K2, Self::K4];

    pub fn name(&self) -> &'static str {
        match self {
            Self::K1 => "k1",
            Self::K2 => "k2",
            Self::K4 => "k4",
        }
    }

    /// True knots, repeated where the function jumps.
    pub fn knots(&self) -> Vec<f64> {
        match self {
            Self::K1 => vec![0.5],
            Self::K2 => vec![0.3, 0.7],
            Self::K4 => vec![0.2, 0.2, 0.5, 0.7],
        }
    }

    pub fn noise_sd(&self) -> f64 {
        match self {
            Self::K1 => 0.4,
            Self::K2 => 0.3,
            Self::K4 => 0.4,
        }
    }

    pub fn jumps(&self) -> Vec<Jump> {
        match self {
            Self::K4 => vec![Jump { dim: 0, at: 0.2, size: 2.0 }],
            _ => Vec::new(),
        }
    }

    /// Noiseless value at `x`.
    ///
    /// * k1: through `(0, 0)`, `(0.5, 2)`, `(1, 0.5)`.
    /// * k2: through `(0, 1)`, `(0.3, 2.5)`, `(0.7, 0.5)`, `(1, 1.5)`.
    /// * k4: `5x` on `[0, 0.2)`, then through `(0.2, 3)`, `(0.5, 1.5)`,
    ///   `(0.7, 2.5)`, `(1, 1)`.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::K1 => interpolate(&[0.0, 0.5, 1.0], &[0.0, 2.0, 0.5], x),
            Self::K2 => interpolate(&[0.0, 0.3, 0.7, 1.0], &[1.0, 2.5, 0.5, 1.5], x),
            Self::K4 => {
                if x < 0.2 {
                    5.0 * x
                } else {
                    interpolate(&[0.2, 0.5, 0.7, 1.0], &[3.0, 1.5, 2.5, 1.0], x)
                }
            }
        }
    }

    pub fn sample(&self, m: usize, noise_sd: f64, seed: u64) -> Result<Generated> {
        sample_with(1, m, noise_sd, seed, |x| self.eval(x[0]))
    }
}

impl FromStr for LinearCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownScenario { name: s.into(), available: names(&Self::ALL, Self::name) })
    }
}

fn names<T: Copy>(all: &[T], name: fn(&T) -> &'static str) -> Vec<String> {
    all.iter().map(|c| name(c).to_string()).collect()
}

/// Piecewise-linear knot data with the case's own noise level.
pub fn gen_linear_spline(case: LinearCase, m: usize, seed: u64) -> Result<Generated> {
    case.sample(m, case.noise_sd(), seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CurveCase {
    #[serde(rename = "1.1")]
    C1,
    #[serde(rename = "1.2")]
    C2,
    #[serde(rename = "1.3")]
    C3,
    #[serde(rename = "1.4")]
    C4,
}

impl CurveCase {
    pub const ALL: [Self; 4] = [Self::C1, Self::C2, Self::C3, Self::C4];

    pub fn name(&self) -> &'static str {
        match self {
            Self::C1 => "1.1",
            Self::C2 => "1.2",
            Self::C3 => "1.3",
            Self::C4 => "1.4",
        }
    }

    pub fn noise_sd(&self) -> f64 {
        match self {
            Self::C1 => 2.0,
            Self::C2 => 2.0,
            Self::C3 => 4.0,
            Self::C4 => 1.0,
        }
    }

    pub fn jumps(&self) -> Vec<Jump> {
        match self {
            Self::C3 => vec![Jump { dim: 0, at: 0.4, size: 24.0 }],
            Self::C4 => vec![
                Jump { dim: 0, at: 0.25, size: 6.0 },
                Jump { dim: 0, at: 0.5, size: -7.0 },
                Jump { dim: 0, at: 0.75, size: 6.0 },
            ],
            _ => Vec::new(),
        }
    }

    /// Noiseless value at `x`.
    ///
    /// * 1.1: `8 sin(2 pi x) + 4 x`.
    /// * 1.2: `10 exp(-((x - 0.6) / 0.12)^2) - 3 cos(3 pi x)`.
    /// * 1.3: `6 sin(pi x) + 24 [x >= 0.4]`.
    /// * 1.4: `2 x + 6 [x >= 0.25] - 7 [x >= 0.5] + 6 [x >= 0.75]`.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::C1 => 8.0 * (2.0 * PI * x).sin() + 4.0 * x,
            Self::C2 => 10.0 * (-((x - 0.6) / 0.12).powi(2)).exp() - 3.0 * (3.0 * PI * x).cos(),
            Self::C3 => 6.0 * (PI * x).sin() + 24.0 * step(x, 0.4),
            Self::C4 => 2.0 * x + 6.0 * step(x, 0.25) - 7.0 * step(x, 0.5) + 6.0 * step(x, 0.75),
        }
    }

    pub fn sample(&self, m: usize, noise_sd: f64, seed: u64) -> Result<Generated> {
        sample_with(1, m, noise_sd, seed, |x| self.eval(x[0]))
    }
}

impl FromStr for CurveCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownScenario { name: s.into(), available: names(&Self::ALL, Self::name) })
    }
}

pub fn gen_curve(case: CurveCase, m: usize, seed: u64) -> Result<Generated> {
    case.sample(m, case.noise_sd(), seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SurfaceCase {
    #[serde(rename = "2.1")]
    S1,
    #[serde(rename = "2.2")]
    S2,
    #[serde(rename = "2.3")]
    S3,
    #[serde(rename = "2.4")]
    S4,
}

impl SurfaceCase {
    pub const ALL: [Self; 4] = [Self::S1, Self::S2, Self::S3, Self::S4];

    pub fn name(&self) -> &'static str {
        match self {
            Self::S1 => "2.1",
            Self::S2 => "2.2",
            Self::S3 => "2.3",
            Self::S4 => "2.4",
        }
    }

    pub fn noise_sd(&self) -> f64 {
        match self {
            Self::S1 => 1.0,
            Self::S2 => 1.5,
            Self::S3 => 2.0,
            Self::S4 => 2.0,
        }
    }

    pub fn jumps(&self) -> Vec<Jump> {
        match self {
            Self::S3 => vec![Jump { dim: 0, at: 0.5, size: 10.0 }],
            Self::S4 => vec![Jump { dim: 0, at: 0.3, size: 12.0 }, Jump { dim: 1, at: 0.6, size: -12.0 }],
            _ => Vec::new(),
        }
    }

    /// Noiseless value at `(x1, x2)`.
    ///
    /// * 2.1: `4 sin(2 pi x1) cos(pi x2)`.
    /// * 2.2: `6 exp(-((x1 - 0.5)^2 + (x2 - 0.4)^2) / 0.08) + 2 x1 x2`.
    /// * 2.3: `3 sin(pi x2) + 2 x1 + 10 [x1 >= 0.5]`.
    /// * 2.4: `2 cos(pi x1) + 2 x2 + 12 [x1 >= 0.3] - 12 [x2 >= 0.6]`.
    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        match self {
            Self::S1 => 4.0 * (2.0 * PI * x1).sin() * (PI * x2).cos(),
            Self::S2 => 6.0 * (-((x1 - 0.5).powi(2) + (x2 - 0.4).powi(2)) / 0.08).exp() + 2.0 * x1 * x2,
            Self::S3 => 3.0 * (PI * x2).sin() + 2.0 * x1 + 10.0 * step(x1, 0.5),
            Self::S4 => 2.0 * (PI * x1).cos() + 2.0 * x2 + 12.0 * step(x1, 0.3) - 12.0 * step(x2, 0.6),
        }
    }

    pub fn sample(&self, m: usize, noise_sd: f64, seed: u64) -> Result<Generated> {
        sample_with(2, m, noise_sd, seed, |x| self.eval(x[0], x[1]))
    }
}

impl FromStr for SurfaceCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownScenario { name: s.into(), available: names(&Self::ALL, Self::name) })
    }
}

pub fn gen_surface(case: SurfaceCase, m: usize, seed: u64) -> Result<Generated> {
    case.sample(m, case.noise_sd(), seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    const MESH: f64 = 1e-6;

    /// Largest `|f(x + MESH) - f(x)|` over a grid of `[0, 1 - MESH]`, and
    /// where it happens.
    fn max_jump(f: impl Fn(f64) -> f64) -> (f64, f64) {
        let n = 200_000;
        let mut best = (0.0, 0.0);
        for i in 0..n {
            let x = i as f64 / n as f64;
            let d = (f(x + MESH) - f(x)).abs();
            if d > best.0 {
                best = (d, x);
            }
        }
        best
    }

    #[test]
    fn linear_cases_pass_through_their_breakpoints() {
        assert_eq!(LinearCase::K1.eval(0.5), 2.0);
        assert_eq!(LinearCase::K1.eval(1.0), 0.5);
        assert_eq!(LinearCase::K2.eval(0.3), 2.5);
        assert_eq!(LinearCase::K2.eval(0.7), 0.5);
        assert_eq!(LinearCase::K4.eval(0.2), 3.0);
        assert!((LinearCase::K4.eval(0.2 - 1e-12) - 1.0).abs() < 1e-9);
        assert_eq!(LinearCase::K4.eval(0.7), 2.5);
    }

    #[test]
    fn noiseless_k1_lies_on_two_segments() {
        let g = LinearCase::K1.sample(200, 0.0, 3).unwrap();
        for (x, y) in g.data.column(0).iter().zip(g.data.y()) {
            let line = if *x <= 0.5 { 4.0 * x } else { 2.0 - 3.0 * (x - 0.5) };
            assert!((y - line).abs() < 1e-12);
        }
    }

    #[test]
    fn same_seed_same_data() {
        for case in LinearCase::ALL {
            assert_eq!(gen_linear_spline(case, 50, 9).unwrap(), gen_linear_spline(case, 50, 9).unwrap());
        }
        assert_ne!(gen_curve(CurveCase::C1, 50, 1).unwrap(), gen_curve(CurveCase::C1, 50, 2).unwrap());
        assert_eq!(gen_surface(SurfaceCase::S4, 50, 5).unwrap(), gen_surface(SurfaceCase::S4, 50, 5).unwrap());
    }

    #[test]
    fn residual_sd_matches_configuration() {
        for case in LinearCase::ALL {
            let g = gen_linear_spline(case, 100_000, 11).unwrap();
            let r: Vec<f64> = g.data.y().iter().zip(&g.truth).map(|(y, t)| y - t).collect();
            let sd = stats::sd(&r);
            assert!((sd / case.noise_sd() - 1.0).abs() < 0.02, "{}: {sd}", case.name());
        }
    }

    #[test]
    fn inputs_are_uniform_on_the_unit_interval() {
        let g = gen_curve(CurveCase::C2, 20_000, 4).unwrap();
        let x = g.data.column(0);
        assert!(x.iter().all(|v| (0.0..1.0).contains(v)));
        assert!((stats::mean(x) - 0.5).abs() < 0.01);
        assert!((stats::sd(x) - (1.0f64 / 12.0).sqrt()).abs() < 0.01);
    }

    #[test]
    fn small_samples_and_unknown_cases_are_rejected() {
        assert!(gen_linear_spline(LinearCase::K1, 19, 0).is_err());
        assert!(gen_surface(SurfaceCase::S1, 10, 0).is_err());
        assert!(matches!("k3".parse::<LinearCase>(), Err(Error::UnknownScenario { .. })));
        assert!("1.5".parse::<CurveCase>().is_err());
        assert_eq!("2.3".parse::<SurfaceCase>().unwrap(), SurfaceCase::S3);
        assert_eq!("k4".parse::<LinearCase>().unwrap(), LinearCase::K4);
    }

    #[test]
    fn smooth_cases_have_no_discontinuity() {
        for case in [CurveCase::C1, CurveCase::C2] {
            assert!(max_jump(|x| case.eval(x)).0 < 1e-3, "{}", case.name());
        }
        for case in [SurfaceCase::S1, SurfaceCase::S2] {
            for &fixed in &[0.0, 0.37, 0.81] {
                assert!(max_jump(|x| case.eval(x, fixed)).0 < 1e-3);
                assert!(max_jump(|x| case.eval(fixed, x)).0 < 1e-3);
            }
        }
        for case in [LinearCase::K1, LinearCase::K2] {
            assert!(max_jump(|x| case.eval(x)).0 < 1e-3);
        }
    }

    #[test]
    fn jumps_are_large_and_where_documented() {
        let check = |f: &dyn Fn(f64) -> f64, j: &Jump, sd: f64| {
            let d = f(j.at) - f(j.at - MESH);
            assert!(d.abs() >= 5.0 * sd, "jump {d} at {}", j.at);
            assert!((d - j.size).abs() < 1e-3);
        };
        for case in [CurveCase::C3, CurveCase::C4] {
            let jumps = case.jumps();
            assert!(!jumps.is_empty());
            for j in &jumps {
                check(&|x| case.eval(x), j, case.noise_sd());
            }
            // nothing else jumps
            let f = |x: f64| case.eval(x) - jumps.iter().map(|j| j.size * step(x, j.at)).sum::<f64>();
            assert!(max_jump(f).0 < 1e-3);
        }
        for case in [SurfaceCase::S3, SurfaceCase::S4] {
            for j in case.jumps() {
                let f = |t: f64| if j.dim == 0 { case.eval(t, 0.45) } else { case.eval(0.45, t) };
                check(&f, &j, case.noise_sd());
            }
        }
        let j = LinearCase::K4.jumps()[0];
        check(&|x| LinearCase::K4.eval(x), &j, 0.4);
        assert_eq!(CurveCase::C4.jumps().len(), 3);
    }

    #[test]
    fn golden_values() {
        let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        close(LinearCase::K1.eval(0.3), 1.2);
        close(LinearCase::K2.eval(0.85), 1.0);
        close(LinearCase::K4.eval(0.1), 0.5);
        close(LinearCase::K4.eval(0.35), 2.25);
        close(CurveCase::C1.eval(0.25), 9.0);
        close(CurveCase::C2.eval(0.6), 10.0 - 3.0 * (1.8 * PI).cos());
        close(CurveCase::C3.eval(0.5), 30.0);
        close(CurveCase::C4.eval(0.8), 6.6);
        close(SurfaceCase::S1.eval(0.25, 0.0), 4.0);
        close(SurfaceCase::S2.eval(0.5, 0.4), 6.4);
        close(SurfaceCase::S3.eval(0.5, 0.5), 14.0);
        close(SurfaceCase::S4.eval(0.0, 0.6), -8.8);
    }
}
