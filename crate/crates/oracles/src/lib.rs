//! Reference computations that share no code path with the sampler: B-splines
//! by divided differences, log evidence by quadrature, and posteriors by
//! enumeration of every knot state on small grids. Also hosts the acceptance
//! suite, which runs last in a workspace test run.

use ebars::basis::tensor_design_matrix;
use ebars::evidence::{fit, log_posterior, PosteriorMode};
use ebars::{CandidateGrid, Dataset, KnotState};
use nalgebra::{DMatrix, DVector};

fn falling_factorial(p: usize, r: usize) -> f64 {
    (0..r).map(|i| (p - i) as f64).product()
}

/// `d^r/dt^r (t - x)_+^p / r!`, with `(u)_+^0 = [u > 0]`.
fn truncated_power_taylor(t: f64, x: f64, p: usize, r: usize) -> f64 {
    if r > p || t <= x {
        return 0.0;
    }
    let fact: f64 = (1..=r).map(|i| i as f64).product();
    falling_factorial(p, r) * (t - x).powi((p - r) as i32) / fact
}

/// Divided difference `[ts](. - x)_+^p`, confluent where knots repeat.
fn divided_difference(ts: &[f64], x: f64, p: usize) -> f64 {
    let n = ts.len();
    if ts[0] == ts[n - 1] {
        return truncated_power_taylor(ts[0], x, p, n - 1);
    }
    (divided_difference(&ts[1..], x, p) - divided_difference(&ts[..n - 1], x, p)) / (ts[n - 1] - ts[0])
}

/// `B_{j,p}(x) = (t_{j+p+1} - t_j) [t_j, ..., t_{j+p+1}](. - x)_+^p`.
pub fn divided_difference_basis(knots: &[f64], p: usize, j: usize, x: f64) -> f64 {
    let ts = &knots[j..=j + p + 1];
    (ts[p + 1] - ts[0]) * divided_difference(ts, x, p)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Log marginal likelihood of `y` under `beta | sigma ~ N(0, m sigma^2 (Z'Z)^-1)`
/// and `p(sigma) ∝ 1 / sigma`, by numerical integration over `log sigma`.
///
/// Given `sigma`, `y ~ N(0, sigma^2 (I + m H))` with `H` the hat matrix of `Z`,
/// built here from a Cholesky factor of `Z'Z`.
pub fn log_evidence_quadrature(z: &DMatrix<f64>, y: &[f64]) -> f64 {
    let m = z.nrows();
    let gram = z.transpose() * z;
    let chol = gram.cholesky().expect("design has full column rank");
    let hat = z * chol.inverse() * z.transpose();
    let cov = DMatrix::identity(m, m) + hat * m as f64;
    let cov_chol = cov.cholesky().expect("covariance is positive definite");
    let log_det: f64 = 2.0 * cov_chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let yv = DVector::from_column_slice(y);
    let q = yv.dot(&cov_chol.solve(&yv));

    let mf = m as f64;
    let g = |s: f64| -mf * s - 0.5 * q * (-2.0 * s).exp();
    let s_star = 0.5 * (q / mf).ln();
    let g_star = g(s_star);
    let width = 40.0 / (2.0 * mf).sqrt();
    let integral = adaptive_simpson(&|s| (g(s) - g_star).exp(), s_star - width, s_star + width, 1e-13);
    -0.5 * mf * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det + g_star + integral.ln()
}

/// Every subset of the candidate grid for a one-dimensional problem.
pub fn all_states(n: usize, grid: &CandidateGrid) -> Vec<KnotState> {
    (0..1u32 << n)
        .map(|mask| {
            let idx: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
            KnotState::new(vec![idx], grid).unwrap()
        })
        .collect()
}

/// Normalised posterior over all knot subsets of a one-dimensional grid.
/// Rank-deficient states get zero mass.
pub fn enumerate_posterior(
    data: &Dataset,
    grid: &CandidateGrid,
    degree: usize,
    mode: PosteriorMode,
    gamma: f64,
) -> Vec<(KnotState, f64)> {
    let n = grid.sizes()[0];
    let logs: Vec<(KnotState, f64)> = all_states(n, grid)
        .into_iter()
        .map(|s| {
            let kvs = s.knot_vectors(grid, &[degree]).unwrap();
            let z = tensor_design_matrix(&kvs, data.columns()).unwrap();
            let f = fit(&z, data.y()).unwrap();
            let lp = if f.is_rank_deficient() {
                f64::NEG_INFINITY
            } else {
                log_posterior(mode, &f, &s.counts(), &[n], gamma)
            };
            (s, lp)
        })
        .collect();
    let max = logs.iter().map(|(_, l)| *l).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = logs.iter().map(|(_, l)| (l - max).exp()).sum();
    logs.into_iter().map(|(s, l)| (s, (l - max).exp() / total)).collect()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divided_differences_reproduce_hat_functions() {
        // degree 1 on [0, 0, 0.5, 1, 1]: hats peaking at 0, 0.5 and 1
        let t = [0.0, 0.0, 0.5, 1.0, 1.0];
        for x in [0.1, 0.25, 0.6, 0.9] {
            let hat = (1.0 - (x - 0.5f64).abs() / 0.5).max(0.0);
            assert!((divided_difference_basis(&t, 1, 1, x) - hat).abs() < 1e-12);
            let sum: f64 = (0..3).map(|j| divided_difference_basis(&t, 1, j, x)).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn simpson_integrates_known_functions() {
        let v = adaptive_simpson(&|x| x.exp(), 0.0, 1.0, 1e-12);
        assert!((v - (1f64.exp() - 1.0)).abs() < 1e-10);
        let g = adaptive_simpson(&|x| (-x * x).exp(), -10.0, 10.0, 1e-12);
        assert!((g - std::f64::consts::PI.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn enumeration_is_a_distribution_over_every_subset() {
        let grid = CandidateGrid::uniform(&[4]).unwrap();
        assert_eq!(all_states(4, &grid).len(), 16);
        let x: Vec<f64> = (0..30).map(|i| i as f64 / 29.0).collect();
        let y: Vec<f64> = x.iter().map(|v| (6.0 * v).sin()).collect();
        let data = Dataset::new(vec![x], y).unwrap();
        let post = enumerate_posterior(&data, &grid, 1, PosteriorMode::Exact, 1.0);
        assert!((post.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(post.iter().all(|(_, p)| *p >= 0.0));
    }

    #[test]
    fn total_variation_bounds() {
        assert_eq!(total_variation(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
        assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    }
}
