use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Exhaustive enumeration was requested beyond the supported size.
    #[error("capacity exceeded: {what} = {got} exceeds the maximum of {max}")]
    Capacity { what: &'static str, got: usize, max: usize },

    #[error("rank-deficient design matrix (column {column})")]
    RankDeficient { column: usize },

    #[error("no convergence after {iterations} iterations (last sup-norm change {last_delta:e}, tolerance {tol:e})")]
    NonConvergence { iterations: usize, last_delta: f64, tol: f64 },

    /// Invalid configuration or command-line usage.
    #[error("{0}")]
    Usage(String),

    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
