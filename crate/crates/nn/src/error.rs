use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("forward cache does not belong to the current parameters")]
    StaleCache,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("invalid network layout: {0}")]
    Layout(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
