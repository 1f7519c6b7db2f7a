//! Candidate knot grids, the knot-state prior and the birth / death / relocation
//! proposal law.
//!
//! With `n_i` candidates in dimension `i` and `k_i` selected knots, the model
//! space has `tau(k) = prod_i C(n_i, k_i)` location combinations and the joint
//! prior is `pi(k, xi) ∝ tau(k)^(-gamma)`. Per dimension the move probabilities
//! are
//!
//! ```text
//! birth     b_k = c * min(1, ((n - k) / (k + 1))^(1 - gamma))     (0 when k = n)
//! death     d_k = c * min(1, (k / (n - k + 1))^(1 - gamma))       (0 when k = 0)
//! relocate  r_k = 1 - b_k - d_k
//! ```
//!
//! which satisfy `pi(k) b_k = pi(k + 1) d_(k+1)` for `pi(k) ∝ C(n, k)^(1 - gamma)`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::basis::KnotVector;
use crate::error::{Error, Result};

/// Ordered, distinct candidate knot locations per dimension, all inside `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGrid {
    dims: Vec<Vec<f64>>,
}

impl CandidateGrid {
    pub fn new(dims: Vec<Vec<f64>>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidParameter("candidate grid needs at least one dimension".into()));
        }
        for (i, eta) in dims.iter().enumerate() {
            if eta.is_empty() {
                return Err(Error::InvalidParameter(format!("dimension {i} has no candidates")));
            }
            if eta.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::InvalidParameter(format!(
                    "dimension {i} has candidates outside (0, 1)"
                )));
            }
            if eta.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidParameter(format!(
                    "dimension {i} candidates are not strictly increasing"
                )));
            }
        }
        Ok(Self { dims })
    }

    /// `eta_i = { j / (n_i + 1) : j = 1..=n_i }`.
    pub fn uniform(sizes: &[usize]) -> Result<Self> {
        if let Some(i) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::InvalidParameter(format!("grid size for dimension {i} is zero")));
        }
        Self::new(
            sizes
                .iter()
                .map(|&n| (1..=n).map(|j| j as f64 / (n + 1) as f64).collect())
                .collect(),
        )
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.dims.iter().map(Vec::len).collect()
    }

    pub fn locations(&self, dim: usize) -> &[f64] {
        &self.dims[dim]
    }
}

pub fn make_uniform_grid(sizes: &[usize]) -> Result<CandidateGrid> {
    CandidateGrid::uniform(sizes)
}

/// Selected candidate indices per dimension, kept sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KnotState {
    indices: Vec<Vec<usize>>,
}

impl KnotState {
    pub fn new(mut indices: Vec<Vec<usize>>, grid: &CandidateGrid) -> Result<Self> {
        if indices.len() != grid.ndim() {
            return Err(Error::DimensionMismatch { expected: grid.ndim(), got: indices.len() });
        }
        for (i, idx) in indices.iter_mut().enumerate() {
            idx.sort_unstable();
            let n = grid.locations(i).len();
            if idx.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::InvalidParameter(format!("duplicate candidate in dimension {i}")));
            }
            if idx.last().is_some_and(|&j| j >= n) {
                return Err(Error::InvalidParameter(format!(
                    "candidate index out of range in dimension {i}"
                )));
            }
        }
        Ok(Self { indices })
    }

    pub fn empty(ndim: usize) -> Self {
        Self { indices: vec![Vec::new(); ndim] }
    }

    pub fn ndim(&self) -> usize {
        self.indices.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.indices.iter().map(Vec::len).collect()
    }

    pub fn total_knots(&self) -> usize {
        self.indices.iter().map(Vec::len).sum()
    }

    pub fn indices(&self, dim: usize) -> &[usize] {
        &self.indices[dim]
    }

    pub fn locations(&self, grid: &CandidateGrid, dim: usize) -> Vec<f64> {
        let eta = grid.locations(dim);
        self.indices[dim].iter().map(|&j| eta[j]).collect()
    }

    pub fn knot_vector(&self, grid: &CandidateGrid, dim: usize, degree: usize) -> Result<KnotVector> {
        KnotVector::clamped(&self.locations(grid, dim), degree)
    }

    pub fn knot_vectors(&self, grid: &CandidateGrid, degrees: &[usize]) -> Result<Vec<KnotVector>> {
        if degrees.len() != self.ndim() {
            return Err(Error::DimensionMismatch { expected: self.ndim(), got: degrees.len() });
        }
        (0..self.ndim()).map(|i| self.knot_vector(grid, i, degrees[i])).collect()
    }

    /// Basis dimension `prod_i (k_i + p_i + 1)`.
    pub fn basis_dimension(&self, degrees: &[usize]) -> usize {
        self.indices.iter().zip(degrees).map(|(idx, &p)| idx.len() + p + 1).product()
    }

    fn with_dim(&self, dim: usize, idx: Vec<usize>) -> Self {
        let mut indices = self.indices.clone();
        indices[dim] = idx;
        Self { indices }
    }
}

fn ln_choose(n: usize, k: usize) -> f64 {
    if k == 0 || k == n {
        return 0.0;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// `log tau(M_k) = sum_i log C(n_i, k_i)`.
pub fn log_tau(k: &[usize], n: &[usize]) -> f64 {
    debug_assert_eq!(k.len(), n.len());
    k.iter().zip(n).map(|(&ki, &ni)| ln_choose(ni, ki)).sum()
}

fn check_gamma(gamma: f64) -> Result<()> {
    if (0.0..=1.0).contains(&gamma) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("gamma = {gamma} is outside [0, 1]")))
    }
}

fn check_c(c: f64) -> Result<()> {
    if c > 0.0 && c < 0.5 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("c = {c} is outside (0, 0.5)")))
    }
}

/// Unnormalised `log pi(k, xi) = -gamma * log tau(M_k)`.
pub fn log_prior_state(k: &[usize], n: &[usize], gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if gamma == 0.0 {
        return Ok(0.0);
    }
    Ok(-gamma * log_tau(k, n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MoveKind {
    Birth,
    Death,
    Relocate,
}

impl MoveKind {
    pub const ALL: [MoveKind; 3] = [MoveKind::Birth, MoveKind::Death, MoveKind::Relocate];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MoveProbabilities {
    pub birth: f64,
    pub death: f64,
    pub relocate: f64,
}

impl MoveProbabilities {
    pub fn of(&self, kind: MoveKind) -> f64 {
        match kind {
            MoveKind::Birth => self.birth,
            MoveKind::Death => self.death,
            MoveKind::Relocate => self.relocate,
        }
    }
}

fn unchecked_move_probabilities(k: usize, n: usize, k_max: usize, gamma: f64, c: f64) -> MoveProbabilities {
    let e = 1.0 - gamma;
    let birth = if k >= n || k >= k_max {
        0.0
    } else {
        c * (((n - k) as f64 / (k + 1) as f64).powf(e)).min(1.0)
    };
    let death = if k == 0 {
        0.0
    } else {
        c * ((k as f64 / (n - k + 1) as f64).powf(e)).min(1.0)
    };
    MoveProbabilities { birth, death, relocate: 1.0 - birth - death }
}

pub fn move_probabilities(k: usize, n: usize, gamma: f64, c: f64) -> Result<MoveProbabilities> {
    check_gamma(gamma)?;
    check_c(c)?;
    if k > n {
        return Err(Error::InvalidParameter(format!("k = {k} exceeds n = {n}")));
    }
    Ok(unchecked_move_probabilities(k, n, n, gamma, c))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub state: KnotState,
    pub kind: MoveKind,
    pub dim: usize,
}

/// A drawn move: either a concrete proposal, or a move kind with no valid
/// target (relocation from an empty or full dimension), which the sampler
/// treats as a rejected step.
#[derive(Debug, Clone, PartialEq)]
pub enum Draw {
    Move(Proposal),
    NoTarget { kind: MoveKind, dim: usize },
}

/// The proposal law `q(k', xi' | k, xi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProposalKernel {
    gamma: f64,
    c: f64,
    k_max: Vec<usize>,
    fixed_k: bool,
}

impl ProposalKernel {
    pub fn new(gamma: f64, c: f64, grid: &CandidateGrid) -> Result<Self> {
        check_gamma(gamma)?;
        check_c(c)?;
        Ok(Self { gamma, c, k_max: grid.sizes(), fixed_k: false })
    }

    /// Truncates the knot-count prior at `k_max` per dimension.
    pub fn with_k_max(mut self, k_max: &[usize]) -> Result<Self> {
        if k_max.len() != self.k_max.len() {
            return Err(Error::DimensionMismatch { expected: self.k_max.len(), got: k_max.len() });
        }
        for (cap, &requested) in self.k_max.iter_mut().zip(k_max) {
            *cap = (*cap).min(requested);
        }
        Ok(self)
    }

    /// Relocation-only kernel: knot counts never change.
    pub fn fixed_k(mut self) -> Self {
        self.fixed_k = true;
        self
    }

    pub fn is_fixed_k(&self) -> bool {
        self.fixed_k
    }

    pub fn k_max(&self) -> &[usize] {
        &self.k_max
    }

    pub fn move_probabilities(&self, dim: usize, k: usize, n: usize) -> MoveProbabilities {
        if self.fixed_k {
            MoveProbabilities { birth: 0.0, death: 0.0, relocate: 1.0 }
        } else {
            unchecked_move_probabilities(k, n, self.k_max[dim], self.gamma, self.c)
        }
    }

    pub fn propose<R: Rng + ?Sized>(&self, state: &KnotState, grid: &CandidateGrid, rng: &mut R) -> Draw {
        let dim = rng.random_range(0..grid.ndim());
        let n = grid.locations(dim).len();
        let current = state.indices(dim);
        let k = current.len();
        let probs = self.move_probabilities(dim, k, n);

        let u: f64 = rng.random();
        let kind = if u < probs.birth {
            MoveKind::Birth
        } else if u < probs.birth + probs.death {
            MoveKind::Death
        } else {
            MoveKind::Relocate
        };

        let next = match kind {
            MoveKind::Birth => {
                let added = nth_unused(current, n, rng.random_range(0..n - k));
                insert_sorted(current, added)
            }
            MoveKind::Death => {
                let mut idx = current.to_vec();
                idx.remove(rng.random_range(0..k));
                idx
            }
            MoveKind::Relocate => {
                if k == 0 || k == n {
                    return Draw::NoTarget { kind, dim };
                }
                let mut idx = current.to_vec();
                idx.remove(rng.random_range(0..k));
                let added = nth_unused(current, n, rng.random_range(0..n - k));
                insert_sorted(&idx, added)
            }
        };
        Draw::Move(Proposal { state: state.with_dim(dim, next), kind, dim })
    }

    /// `log q(to | from)`; `-inf` when `to` is not reachable in one move.
    pub fn log_density(&self, from: &KnotState, to: &KnotState, grid: &CandidateGrid) -> f64 {
        let changed: Vec<usize> = (0..from.ndim()).filter(|&i| from.indices(i) != to.indices(i)).collect();
        let [dim] = changed[..] else {
            return f64::NEG_INFINITY;
        };
        let a = from.indices(dim);
        let b = to.indices(dim);
        let n = grid.locations(dim).len();
        let k = a.len();
        let probs = self.move_probabilities(dim, k, n);
        let pick_dim = -(grid.ndim() as f64).ln();
        let removed = a.iter().filter(|j| b.binary_search(j).is_err()).count();
        let added = b.iter().filter(|j| a.binary_search(j).is_err()).count();
        let (p, choices) = match (removed, added) {
            (0, 1) => (probs.birth, (n - k) as f64),
            (1, 0) => (probs.death, k as f64),
            (1, 1) => (probs.relocate, (k * (n - k)) as f64),
            _ => return f64::NEG_INFINITY,
        };
        if p <= 0.0 {
            return f64::NEG_INFINITY;
        }
        pick_dim + p.ln() - choices.ln()
    }
}

/// Convenience wrapper around [`ProposalKernel::propose`] with an untruncated,
/// free-k kernel.
pub fn propose<R: Rng + ?Sized>(
    state: &KnotState,
    grid: &CandidateGrid,
    gamma: f64,
    c: f64,
    rng: &mut R,
) -> Result<Draw> {
    Ok(ProposalKernel::new(gamma, c, grid)?.propose(state, grid, rng))
}

/// The `r`-th candidate index (in increasing order) not present in `used`.
fn nth_unused(used: &[usize], n: usize, r: usize) -> usize {
    debug_assert!(r < n - used.len());
    // used is sorted, so walk the gaps
    let mut target = r;
    let mut prev = 0usize;
    for &u in used {
        let gap = u - prev;
        if target < gap {
            return prev + target;
        }
        target -= gap;
        prev = u + 1;
    }
    prev + target
}

fn insert_sorted(idx: &[usize], value: usize) -> Vec<usize> {
    let mut out = idx.to_vec();
    let pos = out.partition_point(|&v| v < value);
    out.insert(pos, value);
    out
}
