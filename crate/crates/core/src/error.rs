use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the estimation pipeline.
///
/// The variants fall into three families that the CLI maps onto exit codes:
/// usage problems, data problems and numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{file}: row {row}, column `{column}`: {message}")]
    Schema {
        file: String,
        row: usize,
        column: String,
        message: String,
    },

    #[error("integrity: {0}")]
    Integrity(String),

    #[error("estimation sample is empty after filtering ({0})")]
    EmptySample(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("logit separation detected at iteration {iteration}: |beta[{index}]| = {value:.3} exceeds 30")]
    Separation {
        iteration: usize,
        index: usize,
        value: f64,
    },

    #[error("{what} did not converge after {iterations} iterations (last value {last:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        last: f64,
    },

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("numerical: {0}")]
    Numerical(String),
}

impl Error {
    /// Process exit code for this error class: 1 usage, 2 data, 3 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Config(_) => 1,
            Error::Io { .. }
            | Error::Schema { .. }
            | Error::Integrity(_)
            | Error::EmptySample(_)
            | Error::InsufficientData(_)
            | Error::Json(_) => 2,
            Error::Separation { .. }
            | Error::NonConvergence { .. }
            | Error::Singular(_)
            | Error::Numerical(_) => 3,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
