use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid knot sequence: {0}")]
    InvalidKnots(String),

    #[error("evaluation point {0} lies outside [0, 1]")]
    OutOfDomain(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("design matrix is rank deficient (m = {m}, nu = {nu})")]
    RankDeficient { m: usize, nu: usize },

    #[error("trace contains no samples")]
    EmptyTrace,

    #[error("no recorded samples have the requested knot counts {0:?}")]
    NoMatchingSamples(Vec<usize>),

    #[error("k-NN graph is disconnected; component sizes {sizes:?}")]
    DisconnectedGraph { sizes: Vec<usize> },

    #[error("unknown scenario `{name}`; available: {}", available.join(", "))]
    UnknownScenario { name: String, available: Vec<String> },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
