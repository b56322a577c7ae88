use alloc::boxed::Box;
use alloc::string::String;

use crate::spce::SpceModel;

/// Errors raised by the emulator, uncertainty and reliability routines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("value {value} outside the support of the {family} marginal")]
    OutsideSupport { family: &'static str, value: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("optimizer did not converge after all restarts (gradient norm {grad_norm:e})")]
    NotConverged {
        best: Box<SpceModel>,
        grad_norm: f64,
    },

    #[error("factorization failed after regularization (min eigenvalue {min_eigenvalue:e}, jitter {jitter:e})")]
    Factorization { min_eigenvalue: f64, jitter: f64 },

    #[error("not enough candidates: need {needed}, have {available}")]
    TooFewCandidates { needed: usize, available: usize },

    #[error("simulator failure: {0}")]
    Simulator(#[from] SimError),
}

/// Failure reported by a [`StochasticSimulator`](crate::testbeds::StochasticSimulator).
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("no unused dataset point within {radius} of query {query:?}")]
    NoPointInRadius { query: alloc::vec::Vec<f64>, radius: f64 },

    #[error("expected input of dimension {expected}, got {got}")]
    BadInput { expected: usize, got: usize },

    #[error("{0}")]
    Other(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
