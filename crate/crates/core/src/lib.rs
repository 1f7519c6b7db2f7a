//! Bayesian free-knot spline regression.
//!
//! Knot counts and locations of a (tensor-product) B-spline regression are
//! sampled by reversible-jump MCMC over a finite candidate grid, scoring each
//! knot configuration either by its exact marginal likelihood under a unit
//! information prior or by an extended-BIC approximation. The [`tsme`] module
//! builds a two-stage manifold denoiser on top (ISOMAP embedding followed by
//! one spline regression per ambient coordinate).

pub mod basis;
pub mod data;
pub mod error;
pub mod evidence;
pub mod experiments;
pub mod inference;
pub mod model_space;
pub mod sampler;
pub mod stats;
pub mod tsme;

pub use basis::{DesignMatrix, KnotVector, SplineSpec};
pub use data::Dataset;
pub use error::{Error, Result};
pub use model_space::{CandidateGrid, KnotState, MoveKind, MoveProbabilities, Proposal, ProposalKernel};
