//! Synthetic data generators and replicated experiment runs.

pub mod generators;
pub mod harness;

pub use generators::{gen_curve, gen_linear_spline, gen_surface, CurveCase, Generated, Jump, LinearCase, SurfaceCase};
pub use harness::{
    run_gamma_sweep, run_gmsd, run_knot_inference, run_scenario, ReplicationReport, ScenarioKind, ScenarioSpec,
    SCENARIOS,
};
