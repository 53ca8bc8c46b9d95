use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("row {row} is not a one-hot vector")]
    NotOneHot { row: usize },

    #[error("row {row} is not a probability vector (sum {sum})")]
    NotStochastic { row: usize, sum: f64 },

    #[error("matrix I + A is not positive definite")]
    Singular,

    #[error("matrix is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    /// AMP produced a non-finite value; carries the last finite iterate.
    #[error("iteration diverged at step {iteration}")]
    Diverged {
        iteration: usize,
        last_state: Option<Box<crate::amp::AmpState>>,
    },

    #[error("no convergence after {iterations} iterations (last change {last_change:e})")]
    NonConvergence {
        iterations: usize,
        last_change: f64,
        history: Vec<f64>,
    },

    #[error("r = {r} is not above r_c = {r_c:.4}; the transition is second order")]
    NotFirstOrder { r: usize, r_c: f64 },

    #[error("free-energy gap has no sign change on the informative branch ({} scan points)", scan.len())]
    NoSignChange {
        scan: Vec<crate::phase::PhaseScanPoint>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::invalid(msg)
}
