use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Parameters violate a model invariant (dimension mismatch, negative
    /// rates, non-stationary influence matrix, ...).
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// Input data or arguments are malformed.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// An event arrived earlier than the detector's clock allows.
    #[error("out-of-order event at t={time} (current time {current})")]
    OutOfOrder { time: f64, current: f64 },

    /// The intensity at an event was not positive, so the log-likelihood is -inf.
    #[error("degenerate likelihood: non-positive intensity at node {node}, t={time}")]
    Degenerate { node: usize, time: f64 },

    /// A numerical routine failed (bracketing, divergence, runaway simulation).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Malformed event file.
    #[error("{path}: line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
