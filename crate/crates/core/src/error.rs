//! Crate-wide error type.

use thiserror::Error;

/// Errors raised by problem construction, the optimizers, and the metrics
/// pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Lower/upper bound vectors are malformed (length 0, length mismatch,
    /// or `lower >= upper` somewhere).
    #[error("invalid bounds: {0}")]
    InvalidBounds(String),

    /// A vector had the wrong length for the operation.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A configuration value is outside its allowed range.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A fitness value was NaN or infinite where a finite one is required.
    #[error("non-finite fitness encountered: {0}")]
    NonFiniteFitness(f64),

    /// A change event was looked up in a history that does not contain it.
    #[error("change event at t={0} not found in history")]
    EventNotFound(u64),

    /// A framework run aborted partway; the partial history is flagged
    /// incomplete by the caller that observes this.
    #[error("run aborted at iteration {at}: {source}")]
    RunAborted {
        at: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A serialized history could not be parsed back.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
