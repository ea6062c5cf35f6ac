use thiserror::Error;

use crate::volmodel::Family;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or variance lies outside its admissible range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Malformed input data (non-finite values, mismatched lengths, bad indices).
    #[error("input error: {0}")]
    Input(String),

    #[error("non-finite value at index {index}: {what}")]
    Numeric { index: usize, what: String },

    #[error("{family} needs at least {needed} observations, interval has {got}")]
    TooFewObservations { family: Family, needed: usize, got: usize },

    #[error("no feasible change-point candidate in interval [{start}, {end}]")]
    NoFeasibleCandidates { start: usize, end: usize },

    #[error("endpoint {endpoint} has {available} observations of history, {needed} required")]
    InsufficientHistory {
        endpoint: usize,
        needed: usize,
        available: usize,
    },

    #[error("calibration failed: {reason} (binding steps: {binding:?})")]
    Calibration { reason: String, binding: Vec<usize> },

    #[error("schedule mismatch: {0}")]
    ScheduleMismatch(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }
}
