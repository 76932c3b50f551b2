use std::io;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("undefined distance: correlation peak {peak} is not positive")]
    UndefinedDistance { peak: f64 },

    #[error("rank-deficient atom selection at atom {atom} (duplicate or dependent atoms)")]
    RankDeficient { atom: usize },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("step size underflow after {iterations} iterations")]
    StepUnderflow { iterations: usize },

    #[error("bad magic in {what}: expected {expected:#010x}, found {actual:#010x}")]
    BadMagic {
        what: String,
        expected: u32,
        actual: u32,
    },

    #[error("truncated {what}: expected {expected} bytes, found {actual}")]
    Truncated {
        what: String,
        expected: usize,
        actual: usize,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("ragged row {row}: expected {expected} values, found {actual}")]
    RaggedRow {
        row: usize,
        expected: usize,
        actual: usize,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// True for errors that describe bad input data rather than numerical failure.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::BadMagic { .. }
                | Error::Truncated { .. }
                | Error::Data(_)
                | Error::Parse { .. }
                | Error::RaggedRow { .. }
                | Error::Io(_)
        )
    }

    /// True for solver failures (singular systems, step underflow, rank deficiency).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::Singular(_)
                | Error::StepUnderflow { .. }
                | Error::UndefinedDistance { .. }
                | Error::NonFinite { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
