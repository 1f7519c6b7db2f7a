use ebars::evidence::PosteriorMode;
use ebars::experiments::LinearCase;
use ebars::model_space::Draw;
use ebars::sampler::{acceptance_log_ratio, Chain, ChainConfig};
use ebars::stats::median;
use ebars::{CandidateGrid, KnotState};

use ebars_oracles::{enumerate_posterior, total_variation};

/// Median exact-vs-EBIC gap over every birth from the true single-knot state.
fn birth_gap(m: usize) -> f64 {
    let g = LinearCase::K1.sample(m, 0.4, 17).unwrap();
    let cfg = ChainConfig { degrees: vec![1], candidates: vec![99], ..ChainConfig::new(1) };
    let grid = cfg.grid().unwrap();
    // candidate 49 of j / 100 sits at the true knot 0.5
    let truth = KnotState::new(vec![vec![49]], &grid).unwrap();
    let chain = Chain::new(&g.data, &cfg).unwrap();
    let current = chain.fit_state(&truth).unwrap();
    let gaps: Vec<f64> = (0..99)
        .filter(|&j| j != 49)
        .map(|j| {
            let s = KnotState::new(vec![vec![49, j]], &grid).unwrap();
            let f = chain.fit_state(&s).unwrap();
            let exact = acceptance_log_ratio(&current, &f, PosteriorMode::Exact);
            let ebic = acceptance_log_ratio(&current, &f, PosteriorMode::Ebic);
            (exact - ebic).abs()
        })
        .collect();
    median(&gaps)
}

#[test]
fn local_moves_agree_better_as_m_grows() {
    // births leave the fit almost unchanged, so the two rules differ by O(1/m)
    let gaps: Vec<f64> = [200, 2000, 20000].into_iter().map(birth_gap).collect();
    assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
    assert!(gaps[2] < 0.01, "{gaps:?}");
}

#[test]
fn distant_moves_keep_an_order_one_gap() {
    // relocating the only knot far from the truth changes RSS by O(m); the
    // gap then settles near a nonzero constant instead of vanishing
    let gap = |m: usize| {
        let g = LinearCase::K1.sample(m, 0.4, 17).unwrap();
        let cfg = ChainConfig { degrees: vec![1], candidates: vec![99], ..ChainConfig::new(1) };
        let grid = cfg.grid().unwrap();
        let chain = Chain::new(&g.data, &cfg).unwrap();
        let at_truth = chain.fit_state(&KnotState::new(vec![vec![49]], &grid).unwrap()).unwrap();
        let far = chain.fit_state(&KnotState::new(vec![vec![19]], &grid).unwrap()).unwrap();
        (acceptance_log_ratio(&at_truth, &far, PosteriorMode::Exact)
            - acceptance_log_ratio(&at_truth, &far, PosteriorMode::Ebic))
        .abs()
    };
    let (small, large) = (gap(2000), gap(200_000));
    assert!(large > 0.3 && (large / small - 1.0).abs() < 0.5, "{small} {large}");
}

#[test]
fn exact_and_ebic_posteriors_converge() {
    let tv = |m: usize| {
        let g = LinearCase::K2.sample(m, 0.3, 5).unwrap();
        let grid = CandidateGrid::uniform(&[6]).unwrap();
        let exact: Vec<f64> = enumerate_posterior(&g.data, &grid, 1, PosteriorMode::Exact, 1.0).iter().map(|p| p.1).collect();
        let ebic: Vec<f64> = enumerate_posterior(&g.data, &grid, 1, PosteriorMode::Ebic, 1.0).iter().map(|p| p.1).collect();
        total_variation(&exact, &ebic)
    };
    let (a, b) = (tv(40), tv(400));
    assert!(a < 0.2, "{a}");
    assert!(b < a, "{a} {b}");
}

#[test]
fn proposals_from_a_chain_are_valid_states() {
    let g = LinearCase::K2.sample(200, 0.3, 2).unwrap();
    let cfg = ChainConfig { degrees: vec![1], candidates: vec![50], ..ChainConfig::new(1) };
    let mut chain = Chain::new(&g.data, &cfg).unwrap();
    let kernel = chain.kernel().clone();
    let grid = chain.grid().clone();
    for _ in 0..500 {
        chain.step().unwrap();
        let current = chain.state().clone();
        if let Draw::Move(p) = kernel.propose(&current, &grid, chain.rng()) {
            let diff = p.state.total_knots() as i64 - current.total_knots() as i64;
            assert!(diff.abs() <= 1);
            assert!(kernel.log_density(&current, &p.state, &grid).is_finite());
        }
    }
}
