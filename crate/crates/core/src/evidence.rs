//! Least-squares fits and the two knot-state log-posteriors.
//!
//! Under a unit information prior `beta | sigma ~ N(0, m sigma^2 (Z'Z)^-1)` and
//! `pi(sigma) ∝ 1 / sigma`, integrating out `(beta, sigma)` gives
//!
//! ```text
//! log p(k, xi | y) = -(nu / 2) log(m + 1) - (m / 2) log a - gamma log tau + const
//! a                = y'(I - m / (m + 1) H) y = RSS + |Hy|^2 / (m + 1)
//! ```
//!
//! The EBIC approximation replaces this with
//! `-((nu + 1) / 2) log m - (m / 2) log sigma_hat^2 - gamma log tau`, where
//! `sigma_hat^2 = RSS / m`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::DesignMatrix;
use crate::error::{Error, Result};
use crate::model_space::log_tau;

/// Smallest accepted `|R_ii| / max_j |R_jj|` before a design counts as rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PosteriorMode {
    #[default]
    Exact,
    Ebic,
}

impl std::str::FromStr for PosteriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "ebic" => Ok(Self::Ebic),
            other => Err(Error::InvalidParameter(format!("unknown posterior mode `{other}`"))),
        }
    }
}

/// Least-squares summary of one design matrix against the response.
#[derive(Debug, Clone)]
pub struct ModelFit {
    m: usize,
    nu: usize,
    beta_hat: DVector<f64>,
    rss: f64,
    fitted_norm2: f64,
    rank_deficient: bool,
    r: DMatrix<f64>,
}

impl ModelFit {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    /// Empty when the design is rank deficient.
    pub fn beta_hat(&self) -> &DVector<f64> {
        &self.beta_hat
    }

    pub fn rss(&self) -> f64 {
        self.rss
    }

    /// `|Hy|^2`.
    pub fn fitted_norm2(&self) -> f64 {
        self.fitted_norm2
    }

    pub fn is_rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    /// `a = RSS + |Hy|^2 / (m + 1)`.
    pub fn a(&self) -> f64 {
        self.rss + self.fitted_norm2 / (self.m as f64 + 1.0)
    }

    pub fn log_a(&self) -> f64 {
        self.a().ln()
    }

    pub fn sigma2_hat(&self) -> f64 {
        self.rss / self.m as f64
    }

    pub fn log_sigma2_hat(&self) -> f64 {
        self.sigma2_hat().ln()
    }

    /// Posterior mean of the coefficients, `m / (m + 1) * beta_hat`.
    pub fn shrunk_beta(&self) -> DVector<f64> {
        &self.beta_hat * self.shrinkage()
    }

    pub fn shrinkage(&self) -> f64 {
        self.m as f64 / (self.m as f64 + 1.0)
    }

    fn deficient(m: usize, nu: usize) -> Self {
        Self {
            m,
            nu,
            beta_hat: DVector::zeros(0),
            rss: f64::NAN,
            fitted_norm2: f64::NAN,
            rank_deficient: true,
            r: DMatrix::zeros(0, 0),
        }
    }
}

/// Least squares through a Householder QR of `Z`.
pub fn fit(z: &DesignMatrix, y: &[f64]) -> Result<ModelFit> {
    let (m, nu) = (z.nrows(), z.ncols());
    if y.len() != m {
        return Err(Error::DimensionMismatch { expected: m, got: y.len() });
    }
    if m <= nu || nu == 0 {
        return Ok(ModelFit::deficient(m, nu));
    }
    let qr = z.values().clone().qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..nu).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) || diag.iter().any(|&d| d / max < RANK_TOLERANCE) {
        return Ok(ModelFit::deficient(m, nu));
    }

    let mut qty = DVector::from_column_slice(y);
    qr.q_tr_mul(&mut qty);
    let head = qty.rows(0, nu).into_owned();
    let fitted_norm2 = head.norm_squared();
    let rss = qty.rows(nu, m - nu).norm_squared();
    let beta_hat = r
        .solve_upper_triangular(&head)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    Ok(ModelFit { m, nu, beta_hat, rss, fitted_norm2, rank_deficient: false, r })
}

/// Unnormalised exact log-posterior of a knot state.
///
/// Returns `-inf` for rank-deficient designs and `+inf` for a perfect fit
/// (`a = 0`).
pub fn log_posterior_exact(fit: &ModelFit, k: &[usize], n: &[usize], gamma: f64) -> f64 {
    if fit.rank_deficient {
        return f64::NEG_INFINITY;
    }
    let a = fit.a();
    if a <= 0.0 {
        return f64::INFINITY;
    }
    let m = fit.m as f64;
    -(fit.nu as f64 / 2.0) * (m + 1.0).ln() - (m / 2.0) * a.ln() - gamma * log_tau(k, n)
}

/// Unnormalised EBIC log-posterior of a knot state, `-BIC_gamma / 2` up to a
/// state-independent constant.
pub fn log_posterior_ebic(fit: &ModelFit, k: &[usize], n: &[usize], gamma: f64) -> f64 {
    if fit.rank_deficient {
        return f64::NEG_INFINITY;
    }
    let s2 = fit.sigma2_hat();
    if s2 <= 0.0 {
        return f64::INFINITY;
    }
    let m = fit.m as f64;
    -((fit.nu as f64 + 1.0) / 2.0) * m.ln() - (m / 2.0) * s2.ln() - gamma * log_tau(k, n)
}

pub fn log_posterior(mode: PosteriorMode, fit: &ModelFit, k: &[usize], n: &[usize], gamma: f64) -> f64 {
    match mode {
        PosteriorMode::Exact => log_posterior_exact(fit, k, n, gamma),
        PosteriorMode::Ebic => log_posterior_ebic(fit, k, n, gamma),
    }
}

/// `BIC_gamma = -2 log L(beta_hat, sigma_hat) + (nu + 1) log m + 2 gamma log tau`.
pub fn ebic(fit: &ModelFit, k: &[usize], n: &[usize], gamma: f64) -> f64 {
    if fit.rank_deficient {
        return f64::INFINITY;
    }
    let m = fit.m as f64;
    let s2 = fit.sigma2_hat();
    let neg2_loglik = m * (2.0 * std::f64::consts::PI * s2).ln() + m;
    neg2_loglik + (fit.nu as f64 + 1.0) * m.ln() + 2.0 * gamma * log_tau(k, n)
}

/// One draw of `(beta, sigma)` from the within-model posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientDraw {
    pub beta: Vec<f64>,
    pub sigma: f64,
}

/// Draws `sigma^2 ~ InvGamma(m / 2, a / 2)` and then
/// `beta ~ N(s beta_hat, s sigma^2 (Z'Z)^-1)` with `s = m / (m + 1)`.
pub fn draw_beta_sigma<R: Rng + ?Sized>(fit: &ModelFit, rng: &mut R) -> Result<CoefficientDraw> {
    if fit.rank_deficient {
        return Err(Error::RankDeficient { m: fit.m, nu: fit.nu });
    }
    let a = fit.a();
    if !(a > 0.0) {
        return Err(Error::Numerical("cannot draw sigma for a perfect fit".into()));
    }
    let shape = Gamma::new(fit.m as f64 / 2.0, 1.0).map_err(|e| Error::Numerical(e.to_string()))?;
    let g: f64 = shape.sample(rng);
    let sigma = (a / 2.0 / g).sqrt();

    let s = fit.shrinkage();
    let z = DVector::from_iterator(fit.nu, (0..fit.nu).map(|_| StandardNormal.sample(rng)));
    // R^-1 z has covariance (R'R)^-1 = (Z'Z)^-1
    let w = fit
        .r
        .solve_upper_triangular(&z)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let beta = &fit.beta_hat * s + w * (s.sqrt() * sigma);
    Ok(CoefficientDraw { beta: beta.iter().copied().collect(), sigma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{build_knot_vector, design_matrix_1d};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_design(rng: &mut ChaCha8Rng, m: usize, nu: usize) -> (DesignMatrix, Vec<f64>) {
        let z = DMatrix::from_fn(m, nu, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let y = (0..m).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        (z.into(), y)
    }

    #[test]
    fn interpolation_has_zero_rss() {
        let kv = build_knot_vector(&[0.25, 0.5, 0.75], 1).unwrap();
        let xs = [0.0, 0.1, 0.25, 0.4, 0.5, 0.6, 0.75, 0.9, 1.0];
        let z = design_matrix_1d(&kv, &xs).unwrap();
        let nodal = [1.0, -2.0, 0.5, 3.0, 1.5];
        let truth = |x: f64| {
            let b = kv.basis_at(x).unwrap();
            b.iter().zip(&nodal).map(|(u, v)| u * v).sum::<f64>()
        };
        let y: Vec<f64> = xs.iter().map(|&x| truth(x)).collect();
        let f = fit(&z, &y).unwrap();
        assert!(f.rss() < 1e-20);
        for (b, v) in f.beta_hat().iter().zip(&nodal) {
            assert!((b - v).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (z, _) = random_design(&mut rng, 10, 3);
        let f = fit(&z, &[0.0; 10]).unwrap();
        assert!(f.beta_hat().iter().all(|&b| b == 0.0));
        assert_eq!(f.rss(), 0.0);
        assert_eq!(f.a(), 0.0);
        assert_eq!(log_posterior_exact(&f, &[0], &[5], 1.0), f64::INFINITY);
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (z, y) = random_design(&mut rng, 8, 3);
        let f = fit(&z, &y).unwrap();
        let zt = z.values().transpose();
        let gram = &zt * z.values();
        let rhs = &zt * DVector::from_column_slice(&y);
        let oracle = gram.cholesky().unwrap().solve(&rhs);
        for (b, o) in f.beta_hat().iter().zip(oracle.iter()) {
            assert!((b - o).abs() < 1e-8, "{b} vs {o}");
        }
        let resid = DVector::from_column_slice(&y) - z.values() * &oracle;
        assert!((f.rss() - resid.norm_squared()).abs() < 1e-10);
    }

    #[test]
    fn rank_deficiency_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (z, y) = random_design(&mut rng, 3, 3);
        let f = fit(&z, &y).unwrap();
        assert!(f.is_rank_deficient());
        assert_eq!(log_posterior_exact(&f, &[0], &[3], 1.0), f64::NEG_INFINITY);
        assert_eq!(log_posterior_ebic(&f, &[0], &[3], 1.0), f64::NEG_INFINITY);
        assert!(draw_beta_sigma(&f, &mut rng).is_err());

        // a hat supported on (0.5, 0.5001) sees no data
        let kv = build_knot_vector(&[0.5, 0.50001, 0.5001], 1).unwrap();
        let xs: Vec<f64> = (0..20).map(|i| if i < 10 { i as f64 / 25.0 } else { 0.6 + i as f64 / 60.0 }).collect();
        let z = design_matrix_1d(&kv, &xs).unwrap();
        let f = fit(&z, &vec![1.0; 20]).unwrap();
        assert!(f.is_rank_deficient());

        let f = fit(&DMatrix::<f64>::zeros(5, 2).into(), &[1.0; 5]).unwrap();
        assert!(f.is_rank_deficient());
    }

    #[test]
    fn posterior_monotone_in_a_and_gamma_zero_drops_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (z, y) = random_design(&mut rng, 30, 4);
        let f1 = fit(&z, &y).unwrap();
        let y2: Vec<f64> = y.iter().map(|v| v * 1.5).collect();
        let f2 = fit(&z, &y2).unwrap();
        assert!(f1.a() < f2.a());
        assert!(log_posterior_exact(&f1, &[2], &[9], 1.0) > log_posterior_exact(&f2, &[2], &[9], 1.0));

        let m = 30.0f64;
        let pure = -2.0 * (m + 1.0).ln() - 15.0 * f1.log_a();
        assert!((log_posterior_exact(&f1, &[2], &[9], 0.0) - pure).abs() < 1e-12);
    }

    #[test]
    fn ebic_matches_gaussian_likelihood_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let m = 60;
        let (z, y) = random_design(&mut rng, m, 5);
        let small: DesignMatrix = z.values().columns(0, 3).into_owned().into();
        let fits = [fit(&z, &y).unwrap(), fit(&small, &y).unwrap()];
        let states = [[3usize], [1]];
        let n = [10usize];
        for gamma in [0.0, 0.5, 1.0] {
            // direct evaluation of -2 log L at the MLE, from residuals
            let direct = |f: &ModelFit, zz: &DesignMatrix, k: &[usize]| {
                let resid = DVector::from_column_slice(&y) - zz.values() * f.beta_hat();
                let s2 = resid.norm_squared() / m as f64;
                let loglik: f64 = resid
                    .iter()
                    .map(|e| -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - e * e / (2.0 * s2))
                    .sum();
                -2.0 * loglik + (f.nu() as f64 + 1.0) * (m as f64).ln() + 2.0 * gamma * log_tau(k, &n)
            };
            let d0 = direct(&fits[0], &z, &states[0]);
            let d1 = direct(&fits[1], &small, &states[1]);
            assert!((ebic(&fits[0], &states[0], &n, gamma) - d0).abs() < 1e-8);
            let lp = |i: usize| log_posterior_ebic(&fits[i], &states[i], &n, gamma);
            assert!(((lp(0) - lp(1)) - (-(d0 - d1) / 2.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn inverse_gamma_and_beta_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let m = 20;
        let (z, y) = random_design(&mut rng, m, 2);
        let f = fit(&z, &y).unwrap();
        let draws = 100_000;
        let mut s2 = Vec::with_capacity(draws);
        let mut b0 = Vec::with_capacity(draws);
        for _ in 0..draws {
            let d = draw_beta_sigma(&f, &mut rng).unwrap();
            assert!(d.sigma > 0.0);
            s2.push(d.sigma * d.sigma);
            b0.push(d.beta[0]);
        }
        let mean_sd = |v: &[f64]| {
            let n = v.len() as f64;
            let mu = v.iter().sum::<f64>() / n;
            let var = v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0);
            (mu, (var / n).sqrt())
        };
        let (mu, se) = mean_sd(&s2);
        let expect = (f.a() / 2.0) / (m as f64 / 2.0 - 1.0);
        assert!((mu - expect).abs() < 3.0 * se, "{mu} vs {expect} (se {se})");
        let (mu, se) = mean_sd(&b0);
        let expect = f.shrunk_beta()[0];
        assert!((mu - expect).abs() < 3.0 * se, "{mu} vs {expect} (se {se})");
    }

    #[test]
    fn joint_draws_match_grid_posterior() {
        // nu = 1: p(beta, sigma | y) ∝ sigma^-(m+2) exp(-(|y - z beta|^2 + beta^2 z'z / m) / (2 sigma^2))
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let m = 15;
        let (z, y) = random_design(&mut rng, m, 1);
        let f = fit(&z, &y).unwrap();
        let zz: Vec<f64> = z.values().column(0).iter().copied().collect();
        let ztz: f64 = zz.iter().map(|v| v * v).sum();
        let log_density = |beta: f64, sigma: f64| {
            let rss: f64 = zz.iter().zip(&y).map(|(zi, yi)| (yi - zi * beta).powi(2)).sum();
            -((m + 2) as f64) * sigma.ln() - (rss + beta * beta * ztz / m as f64) / (2.0 * sigma * sigma)
        };

        let b_hat = f.shrunk_beta()[0];
        let s_hat = f.sigma2_hat().sqrt();
        let (b_lo, b_hi) = (b_hat - 6.0 * s_hat / ztz.sqrt(), b_hat + 6.0 * s_hat / ztz.sqrt());
        let (s_lo, s_hi) = (0.3 * s_hat, 3.0 * s_hat);
        let bins = 8;
        let sub = 40;
        let mut grid = vec![0.0; bins * bins];
        for i in 0..bins * sub {
            for j in 0..bins * sub {
                let b = b_lo + (i as f64 + 0.5) / (bins * sub) as f64 * (b_hi - b_lo);
                let s = s_lo + (j as f64 + 0.5) / (bins * sub) as f64 * (s_hi - s_lo);
                grid[(i / sub) * bins + j / sub] += log_density(b, s).exp();
            }
        }
        let total: f64 = grid.iter().sum();
        grid.iter_mut().for_each(|g| *g /= total);

        let draws = 200_000;
        let mut hist = vec![0.0; bins * bins];
        let mut inside = 0usize;
        for _ in 0..draws {
            let d = draw_beta_sigma(&f, &mut rng).unwrap();
            let (b, s) = (d.beta[0], d.sigma);
            if b < b_lo || b >= b_hi || s < s_lo || s >= s_hi {
                continue;
            }
            let i = ((b - b_lo) / (b_hi - b_lo) * bins as f64) as usize;
            let j = ((s - s_lo) / (s_hi - s_lo) * bins as f64) as usize;
            hist[i * bins + j] += 1.0;
            inside += 1;
        }
        assert!(inside as f64 > 0.99 * draws as f64);
        let tv: f64 = hist.iter().zip(&grid).map(|(h, g)| (h / inside as f64 - g).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.01, "tv = {tv}");
    }

    #[test]
    fn nested_bases_do_not_increase_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let xs: Vec<f64> = (0..80).map(|_| rng.random::<f64>() * 0.8).collect();
        let y: Vec<f64> = xs.iter().map(|x| (6.0 * x).sin() + rng.random::<f64>()).collect();
        let coarse = fit(&design_matrix_1d(&build_knot_vector(&[0.3], 3).unwrap(), &xs).unwrap(), &y).unwrap();
        // extra knot in the sparse tail of the data
        let tail = fit(&design_matrix_1d(&build_knot_vector(&[0.3, 0.75], 3).unwrap(), &xs).unwrap(), &y).unwrap();
        let near = fit(&design_matrix_1d(&build_knot_vector(&[0.3, 0.5], 3).unwrap(), &xs).unwrap(), &y).unwrap();
        for refined in [tail, near] {
            assert!(!refined.is_rank_deficient());
            assert!(refined.a() <= coarse.a() * (1.0 + 1e-9));
            assert!(refined.rss() <= coarse.rss() * (1.0 + 1e-9));
        }
    }

    proptest! {
        #[test]
        fn a_identity_and_bounds(seed in any::<u64>(), m in 6usize..60, nu in 1usize..5) {
            prop_assume!(m > nu);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (z, y) = random_design(&mut rng, m, nu);
            let f = fit(&z, &y).unwrap();
            prop_assume!(!f.is_rank_deficient());
            let yv = DVector::from_column_slice(&y);
            let hy = z.values() * f.beta_hat();
            let direct = yv.norm_squared() - (m as f64 / (m as f64 + 1.0)) * yv.dot(&hy);
            prop_assert!((f.a() - direct).abs() <= 1e-9 * direct.abs().max(1.0));
            prop_assert!(f.a() >= f.rss());
            prop_assert!(f.rss() >= 0.0);
            prop_assert!((f.sigma2_hat() - f.rss() / m as f64).abs() < 1e-15);
        }
    }
}
