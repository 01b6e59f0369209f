use std::path::PathBuf;

use crate::quantizer::{IterationTrace, QuantizerSpec};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("bit width {0} is outside the supported range {1}..={2}")]
    InvalidBitWidth(u32, u32, u32),

    #[error("interval ({a}, {b}) carries no probability mass")]
    ZeroMassInterval { a: f64, b: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(&'static str),

    #[error("no convergence after {} iterations", .0.1.iteration_count)]
    NoConvergence(Box<(QuantizerSpec, IterationTrace)>),

    #[error("shape mismatch: expected {expected} elements, found {found}")]
    ShapeMismatch { expected: usize, found: usize },

    #[error("non-finite value at index {0}")]
    NonFiniteValue(usize),

    #[error("code {code} does not fit in {bits} bits")]
    CodeOutOfRange { code: u32, bits: u32 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed {kind} data: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(kind: &'static str, reason: impl Into<String>) -> Self {
        Error::Format {
            kind,
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
