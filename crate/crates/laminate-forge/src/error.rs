use thiserror::Error;

use crate::laminate::LaminateError;
use crate::matrix::MatrixError;
use crate::sets::SetError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StaircaseError {
    #[error("{matrix} is not in {set}")]
    NotInSet { set: String, matrix: String },
    #[error("degenerate split: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Laminate(#[from] LaminateError),
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Set(#[from] SetError),
    #[error("counter violation: {0}")]
    CounterViolation(String),
    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),
    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),
    #[error("invariant {invariant} violated: {detail}")]
    InvariantViolation { invariant: String, detail: String },
    #[error("mass bound violated: {0}")]
    MassBoundViolation(String),
}

impl StaircaseError {
    pub(crate) fn invariant(invariant: &str, detail: impl Into<String>) -> Self {
        StaircaseError::InvariantViolation { invariant: invariant.to_string(), detail: detail.into() }
    }
}
