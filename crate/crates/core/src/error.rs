use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty matrix ({rows}x{cols})")]
    EmptyMatrix { rows: usize, cols: usize },

    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("{0} requires at least as many rows as columns")]
    WideMatrix(&'static str),

    #[error("matrix is singular to working precision ({0})")]
    Singular(&'static str),

    #[error("stacked channel is rank deficient (rank {rank} < {required})")]
    RankDeficient { rank: usize, required: usize },

    #[error("infeasible dimensions: {0}")]
    Infeasible(String),

    #[error("precoder block {0} has zero norm")]
    ZeroBlock(usize),

    #[error("effective channel has zero diagonal entry at stream {0}")]
    ZeroDiagonal(usize),

    #[error("covariance matrix is not Hermitian positive semidefinite")]
    NotPsd,

    #[error("user channels leave no null space for artificial noise")]
    NoNullSpace,

    #[error("unknown algorithm tag `{0}`")]
    UnknownAlgorithm(String),

    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid value for `{field}`: {msg}")]
    Validation { field: &'static str, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn dims(op: &'static str, expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            op,
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn invalid(field: &'static str, msg: impl Into<String>) -> Self {
        Error::Validation {
            field,
            msg: msg.into(),
        }
    }
}
