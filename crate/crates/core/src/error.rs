use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// No strictly feasible point exists. `certificate` is the smallest value
    /// of the violated quantity reachable under the remaining constraints
    /// (minimum OOB power, or minimum NEF, depending on the mode).
    #[error("infeasible problem: {reason} (best achievable {certificate:e})")]
    Infeasible { reason: String, certificate: f64 },

    #[error("solver did not converge after {iterations} Newton steps (duality gap {gap:e})")]
    NotConverged {
        iterations: usize,
        gap: f64,
        last_iterate: Vec<f64>,
    },

    #[error("matrix has rank {rank} < {required} required")]
    RankDeficient { rank: usize, required: usize },

    #[error("singular system: {0}")]
    Singular(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
