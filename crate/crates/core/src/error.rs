use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DhsqrError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("kernel weight {weight:e} below floor {floor:e}")]
    KernelUnderflow { weight: f64, floor: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
}

pub type Result<T> = std::result::Result<T, DhsqrError>;

pub(crate) fn ensure_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(DhsqrError::DimensionMismatch { expected, found })
    }
}
