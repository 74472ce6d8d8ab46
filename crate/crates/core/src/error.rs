use thiserror::Error;

/// Errors produced while assembling or solving an identification problem.
#[derive(Debug, Error)]
pub enum NetidError {
    #[error("measurement map is not a selection: {0}")]
    NotASelection(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("PDE chain needs an odd node count of at least 5, got {0}")]
    BadM(usize),

    #[error("global parameter {0} is not tied to any node parameter")]
    ZeroDegree(usize),

    #[error("Schur complement of the hidden signals is singular (pivot {pivot})")]
    SingularSchur { pivot: usize },

    #[error("closed-loop operator is singular at sample {0}")]
    SingularLoop(usize),

    #[error("ADMM did not converge within {0} iterations")]
    MaxIterExceeded(usize),

    #[error("worker for node {0} did not report before the barrier timeout")]
    MissingContribution(usize),

    #[error("worker for node {node} failed: {message}")]
    Worker { node: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = NetidError> = std::result::Result<T, E>;
