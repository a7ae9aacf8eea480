//! Crate-wide error type.
//!
//! Every fallible library operation returns [`Error`]. The CLI maps these to
//! process exit codes: config/schema problems → 2, iterative non-convergence
//! → 3, failed verification checks → 4.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid input: bad parameter combinations, malformed tables, schema
    /// violations in config files.
    #[error("config: {0}")]
    Config(String),

    /// A quantity left its mathematical domain (negative radicand, k=0 where
    /// a nonzero mode is required, extrapolation beyond a table, ...).
    #[error("domain: {0}")]
    Domain(String),

    /// An iterative solver did not converge within its budget.
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// A verification check failed hard (identity residual above tolerance,
    /// Hermiticity violation, pole proximity, ...).
    #[error("check failed: {0}")]
    CheckFailed(String),

    /// A requested object would exceed a configured size limit.
    #[error("size limit: {0}")]
    SizeLimit(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI uses for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::SizeLimit(_) | Error::Io(_) => 2,
            Error::NoConvergence(_) => 3,
            Error::CheckFailed(_) => 4,
        }
    }
}
