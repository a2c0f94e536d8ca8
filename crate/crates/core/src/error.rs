//! Error type shared by every stage of the solver.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// The configuration document does not match the schema.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    /// The document parsed but violates a problem invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// A matrix that has to be inverted is singular to working precision.
    #[error(
        "{context}: matrix is singular to working precision (reciprocal condition {rcond:.3e})"
    )]
    Singular { context: String, rcond: f64 },

    /// Any other numerical breakdown (LAPACK failure, non-finite entries, ...).
    #[error("numerical failure in {stage}: {message}")]
    Numerical { stage: String, message: String },

    /// The direct oracle refused a system larger than its cap.
    #[error("oracle size cap exceeded: {unknowns} unknowns (band storage {band_entries} entries), cap {cap}")]
    OracleCap {
        unknowns: usize,
        band_entries: usize,
        cap: usize,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub fn numerical(stage: impl Into<String>, message: impl ToString) -> Self {
        Error::Numerical {
            stage: stage.into(),
            message: message.to_string(),
        }
    }

    pub fn config(field: impl Into<String>, message: impl ToString) -> Self {
        Error::Config {
            field: field.into(),
            message: message.to_string(),
        }
    }

    /// Prefixes the error with the solver stage it came from.
    pub fn at(self, stage: &str) -> Self {
        match self {
            Error::Singular { context, rcond } => Error::Singular {
                context: format!("{stage}: {context}"),
                rcond,
            },
            Error::Numerical {
                stage: inner,
                message,
            } => Error::Numerical {
                stage: format!("{stage}: {inner}"),
                message,
            },
            other => other,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Validation(_) => 2,
            Error::OracleCap { .. } => 3,
            Error::Singular { .. } | Error::Numerical { .. } | Error::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::numerical("lapack", e)
    }
}
