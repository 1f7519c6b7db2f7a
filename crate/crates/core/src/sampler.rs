//! Reversible-jump Metropolis–Hastings over knot states.
//!
//! Each step picks a dimension uniformly, proposes a birth, death or relocation
//! there, and accepts with probability
//!
//! ```text
//! exact:  min(1, (m + 1)^((nu - nu') / 2) (a / a')^(m / 2))
//! ebic:   min(1, m^((nu - nu') / 2) (sigma_hat^2 / sigma_hat'^2)^(m / 2))
//! ```
//!
//! The prior and proposal densities cancel because the move probabilities
//! satisfy detailed balance against the knot-count prior. Rejected steps keep
//! the current state and still record it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::{assemble_tensor, BasisRows};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::evidence::{draw_beta_sigma, fit, CoefficientDraw, ModelFit, PosteriorMode};
use crate::model_space::{CandidateGrid, Draw, KnotState, MoveKind, ProposalKernel};

/// What to do after a rejected proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectionRule {
    /// Standard Metropolis–Hastings: keep and record the current state.
    #[default]
    StayAndRecord,
    /// Keep proposing until a move is accepted, recording only accepted states.
    /// This does not leave the posterior invariant and exists for comparison.
    Repropose,
}

/// Upper bound on proposals per step under [`RejectionRule::Repropose`].
pub const MAX_REPROPOSALS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub gamma: f64,
    pub c: f64,
    pub burn_in: usize,
    /// Number of recorded samples.
    pub steps: usize,
    pub thin: usize,
    pub mode: PosteriorMode,
    pub seed: u64,
    /// Relocation-only sampling with these per-dimension knot counts.
    pub fixed_k: Option<Vec<usize>>,
    /// Candidate grid sizes `n_i`.
    pub candidates: Vec<usize>,
    pub degrees: Vec<usize>,
    pub k_max: Option<Vec<usize>>,
    pub draw_coefficients: bool,
    pub rejection: RejectionRule,
}

impl ChainConfig {
    /// Defaults for a `d`-dimensional problem: cubic splines, 100 candidates
    /// for `d = 1` and 20 per dimension otherwise.
    pub fn new(d: usize) -> Self {
        let n = if d == 1 { 100 } else { 20 };
        Self {
            gamma: 1.0,
            c: 0.4,
            burn_in: 5000,
            steps: 5000,
            thin: 1,
            mode: PosteriorMode::Exact,
            seed: 0,
            fixed_k: None,
            candidates: vec![n; d],
            degrees: vec![3; d],
            k_max: None,
            draw_coefficients: false,
            rejection: RejectionRule::StayAndRecord,
        }
    }

    pub fn ndim(&self) -> usize {
        self.candidates.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.ndim();
        if d == 0 {
            return Err(Error::InvalidParameter("no candidate grid sizes".into()));
        }
        if self.degrees.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: self.degrees.len() });
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("at least one recorded step is required".into()));
        }
        if self.thin == 0 {
            return Err(Error::InvalidParameter("thinning interval must be at least 1".into()));
        }
        if let Some(k) = &self.fixed_k {
            if k.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: k.len() });
            }
            if let Some(i) = (0..d).find(|&i| k[i] > self.candidates[i]) {
                return Err(Error::InvalidParameter(format!(
                    "fixed k = {} exceeds {} candidates in dimension {i}",
                    k[i], self.candidates[i]
                )));
            }
        }
        if let Some(k) = &self.k_max {
            if k.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: k.len() });
            }
        }
        // gamma, c and grid sizes are checked where they are used
        Ok(())
    }

    pub fn grid(&self) -> Result<CandidateGrid> {
        CandidateGrid::uniform(&self.candidates)
    }

    fn kernel(&self, grid: &CandidateGrid) -> Result<ProposalKernel> {
        let mut kernel = ProposalKernel::new(self.gamma, self.c, grid)?;
        if let Some(k_max) = &self.k_max {
            kernel = kernel.with_k_max(k_max)?;
        }
        if self.fixed_k.is_some() {
            kernel = kernel.fixed_k();
        }
        Ok(kernel)
    }
}

/// Log Metropolis–Hastings ratio before truncation at 0.
pub fn log_mh_ratio(current: &ModelFit, proposal: &ModelFit, mode: PosteriorMode) -> f64 {
    if proposal.is_rank_deficient() {
        return f64::NEG_INFINITY;
    }
    let m = current.m() as f64;
    let dnu = current.nu() as f64 - proposal.nu() as f64;
    let (base, fit_term) = match mode {
        PosteriorMode::Exact => (m + 1.0, log_diff(current.log_a(), proposal.log_a())),
        PosteriorMode::Ebic => (m, log_diff(current.log_sigma2_hat(), proposal.log_sigma2_hat())),
    };
    dnu / 2.0 * base.ln() + m / 2.0 * fit_term
}

/// `x - y` with `-inf - -inf := 0` (two perfect fits).
fn log_diff(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY && y == f64::NEG_INFINITY {
        0.0
    } else {
        x - y
    }
}

/// `log alpha = min(0, log MH ratio)`; `-inf` for a rank-deficient proposal.
pub fn acceptance_log_ratio(current: &ModelFit, proposal: &ModelFit, mode: PosteriorMode) -> f64 {
    log_mh_ratio(current, proposal, mode).min(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSample {
    pub state: KnotState,
    pub coefficients: Option<CoefficientDraw>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MoveCounters {
    /// Indexed by [`MoveKind::index`].
    pub proposed: [usize; 3],
    pub accepted: [usize; 3],
    /// Steps whose drawn move had no valid target.
    pub no_target: usize,
    pub rank_deficient: usize,
    pub steps: usize,
}

impl MoveCounters {
    pub fn accepted_total(&self) -> usize {
        self.accepted.iter().sum()
    }

    pub fn rejected_total(&self) -> usize {
        self.steps - self.accepted_total()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted_total() as f64 / self.steps.max(1) as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainTrace {
    pub grid: CandidateGrid,
    pub degrees: Vec<usize>,
    pub samples: Vec<PosteriorSample>,
    /// Accept flag of every step, burn-in included.
    pub accepted: Vec<bool>,
    pub counters: MoveCounters,
}

impl ChainTrace {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = &KnotState> {
        self.samples.iter().map(|s| &s.state)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub kind: MoveKind,
    pub dim: usize,
    /// `None` when the drawn move had no valid target.
    pub proposal: Option<KnotState>,
    pub log_ratio: f64,
    pub accepted: bool,
}

/// A running chain; keeps the current fit and per-dimension basis rows.
pub struct Chain<'a> {
    data: &'a Dataset,
    grid: CandidateGrid,
    degrees: Vec<usize>,
    kernel: ProposalKernel,
    mode: PosteriorMode,
    state: KnotState,
    rows: Vec<BasisRows>,
    fit: ModelFit,
    rng: ChaCha8Rng,
}

impl<'a> Chain<'a> {
    pub fn new(data: &'a Dataset, config: &ChainConfig) -> Result<Self> {
        config.validate()?;
        if data.ndim() != config.ndim() {
            return Err(Error::DimensionMismatch { expected: config.ndim(), got: data.ndim() });
        }
        let grid = config.grid()?;
        let kernel = config.kernel(&grid)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let state = initial_state(data, &grid, config, &mut rng)?;
        Self::from_state(data, grid, config.degrees.clone(), kernel, config.mode, state, rng)
    }

    /// Starts at `state` with an explicit kernel and RNG.
    pub fn from_state(
        data: &'a Dataset,
        grid: CandidateGrid,
        degrees: Vec<usize>,
        kernel: ProposalKernel,
        mode: PosteriorMode,
        state: KnotState,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        let rows = (0..grid.ndim())
            .map(|i| basis_rows(data, &grid, &state, &degrees, i))
            .collect::<Result<Vec<_>>>()?;
        let fit = fit_rows(&rows, data)?;
        if fit.is_rank_deficient() {
            return Err(Error::RankDeficient { m: fit.m(), nu: fit.nu() });
        }
        Ok(Self { data, grid, degrees, kernel, mode, state, rows, fit, rng })
    }

    pub fn state(&self) -> &KnotState {
        &self.state
    }

    pub fn fit(&self) -> &ModelFit {
        &self.fit
    }

    pub fn grid(&self) -> &CandidateGrid {
        &self.grid
    }

    pub fn kernel(&self) -> &ProposalKernel {
        &self.kernel
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Fits an arbitrary state against the chain's data.
    pub fn fit_state(&self, state: &KnotState) -> Result<ModelFit> {
        let rows = (0..self.grid.ndim())
            .map(|i| basis_rows(self.data, &self.grid, state, &self.degrees, i))
            .collect::<Result<Vec<_>>>()?;
        fit_rows(&rows, self.data)
    }

    /// One Metropolis–Hastings step.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let proposal = match self.kernel.propose(&self.state, &self.grid, &mut self.rng) {
            Draw::NoTarget { kind, dim } => {
                return Ok(StepOutcome { kind, dim, proposal: None, log_ratio: f64::NEG_INFINITY, accepted: false })
            }
            Draw::Move(p) => p,
        };
        let new_rows = basis_rows(self.data, &self.grid, &proposal.state, &self.degrees, proposal.dim)?;
        let candidate_fit = {
            let refs: Vec<&BasisRows> = (0..self.rows.len())
                .map(|i| if i == proposal.dim { &new_rows } else { &self.rows[i] })
                .collect();
            fit(&assemble_tensor(&refs)?, self.data.y())?
        };
        let log_ratio = acceptance_log_ratio(&self.fit, &candidate_fit, self.mode);
        let accepted = log_ratio == 0.0 || self.rng.random::<f64>().ln() < log_ratio;
        let outcome = StepOutcome {
            kind: proposal.kind,
            dim: proposal.dim,
            proposal: Some(proposal.state.clone()),
            log_ratio,
            accepted,
        };
        if accepted {
            self.state = proposal.state;
            self.rows[proposal.dim] = new_rows;
            self.fit = candidate_fit;
        }
        Ok(outcome)
    }
}

fn basis_rows(
    data: &Dataset,
    grid: &CandidateGrid,
    state: &KnotState,
    degrees: &[usize],
    dim: usize,
) -> Result<BasisRows> {
    BasisRows::evaluate(&state.knot_vector(grid, dim, degrees[dim])?, data.column(dim))
}

fn fit_rows(rows: &[BasisRows], data: &Dataset) -> Result<ModelFit> {
    let refs: Vec<&BasisRows> = rows.iter().collect();
    fit(&assemble_tensor(&refs)?, data.y())
}

/// One knot per dimension at a random candidate (or `fixed_k` random knots),
/// falling back to the empty state when that design is rank deficient.
fn initial_state(data: &Dataset, grid: &CandidateGrid, config: &ChainConfig, rng: &mut ChaCha8Rng) -> Result<KnotState> {
    let sizes = grid.sizes();
    let counts: Vec<usize> = match &config.fixed_k {
        Some(k) => k.clone(),
        None => {
            let cap = config.k_max.clone().unwrap_or_else(|| sizes.clone());
            sizes.iter().zip(&cap).map(|(&n, &c)| 1.min(n).min(c)).collect()
        }
    };
    let draw = |rng: &mut ChaCha8Rng| {
        let idx = counts
            .iter()
            .zip(&sizes)
            .map(|(&k, &n)| rand::seq::index::sample(rng, n, k).into_vec())
            .collect();
        KnotState::new(idx, grid)
    };
    let full_rank = |state: &KnotState| -> Result<bool> {
        let rows = (0..grid.ndim())
            .map(|i| basis_rows(data, grid, state, &config.degrees, i))
            .collect::<Result<Vec<_>>>()?;
        Ok(!fit_rows(&rows, data)?.is_rank_deficient())
    };

    // a few random placements before giving up on the requested counts
    for _ in 0..100 {
        let state = draw(rng)?;
        if full_rank(&state)? {
            return Ok(state);
        }
        if counts.iter().all(|&k| k == 0) {
            break;
        }
    }
    if config.fixed_k.is_none() {
        let empty = KnotState::empty(grid.ndim());
        if full_rank(&empty)? {
            return Ok(empty);
        }
    }
    let nu = KnotState::empty(grid.ndim()).basis_dimension(&config.degrees);
    Err(Error::RankDeficient { m: data.len(), nu })
}

/// Runs burn-in followed by `steps * thin` iterations, recording every
/// `thin`-th state.
pub fn run(data: &Dataset, config: &ChainConfig) -> Result<ChainTrace> {
    let mut chain = Chain::new(data, config)?;
    let total = config.burn_in + config.steps * config.thin;
    let mut counters = MoveCounters::default();
    let mut accepted_log = Vec::with_capacity(total);
    let mut samples = Vec::with_capacity(config.steps);

    for t in 0..total {
        let accepted = match config.rejection {
            RejectionRule::StayAndRecord => {
                let outcome = chain.step()?;
                tally(&mut counters, &outcome);
                outcome.accepted
            }
            RejectionRule::Repropose => {
                let mut accepted = false;
                for _ in 0..MAX_REPROPOSALS {
                    let outcome = chain.step()?;
                    tally(&mut counters, &outcome);
                    if outcome.accepted {
                        accepted = true;
                        break;
                    }
                }
                accepted
            }
        };
        counters.steps += 1;
        accepted_log.push(accepted);

        let after_burn = t + 1 - config.burn_in.min(t + 1);
        if t >= config.burn_in && after_burn % config.thin == 0 {
            let coefficients = if config.draw_coefficients {
                let fit = chain.fit().clone();
                Some(draw_beta_sigma(&fit, chain.rng())?)
            } else {
                None
            };
            samples.push(PosteriorSample { state: chain.state().clone(), coefficients });
        }
    }
    Ok(ChainTrace {
        grid: chain.grid().clone(),
        degrees: config.degrees.clone(),
        samples,
        accepted: accepted_log,
        counters,
    })
}

fn tally(counters: &mut MoveCounters, outcome: &StepOutcome) {
    match &outcome.proposal {
        None => counters.no_target += 1,
        Some(_) => {
            counters.proposed[outcome.kind.index()] += 1;
            if outcome.log_ratio == f64::NEG_INFINITY {
                counters.rank_deficient += 1;
            }
        }
    }
    if outcome.accepted {
        counters.accepted[outcome.kind.index()] += 1;
    }
}
