//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the toolkit. The CLI maps [`Error::is_usage`] errors to
/// exit code 2 and everything else to exit code 1.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("integration diverged at step {step}: {detail}")]
    Divergence { step: usize, detail: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded")]
    Unbounded,

    #[error("simplex iteration limit reached")]
    IterationLimit,

    #[error("cell budget of {limit} exceeded")]
    Budget { limit: usize },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    TrainingDiverged { epoch: usize },

    #[error("truncated Gaussian acceptance rate {rate:.3e} is below 1e-4")]
    PathologicalTruncation { rate: f64 },

    #[error("parse error at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported format version {found} (expected {expected})")]
    UnsupportedVersion { found: u64, expected: u64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Builds a [`Error::Parse`] from a JSON error, converting the line/column
    /// position into a byte offset within `input`.
    pub fn from_json(err: &serde_json::Error, input: &[u8]) -> Self {
        let (line, column) = (err.line(), err.column());
        let mut offset = 0usize;
        let mut current = 1usize;
        for (i, &byte) in input.iter().enumerate() {
            if current == line {
                offset = i + column.saturating_sub(1);
                break;
            }
            if byte == b'\n' {
                current += 1;
            }
        }
        if current < line || line == 0 {
            offset = input.len();
        }
        Error::Parse {
            offset: offset.min(input.len()),
            line,
            column,
            message: err.to_string(),
        }
    }

    /// True for errors caused by how the tool was invoked rather than by the
    /// data it was asked to process.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Argument(_) | Error::Dimension { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
