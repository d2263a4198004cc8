use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoreError {
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },
    #[error("timestep {t} outside 1..={max}")]
    TimestepOutOfRange { t: usize, max: usize },
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("non-finite parameter at index {0}")]
    NonFiniteParams(usize),
    #[error("zero probability for condition {condition}, outcome {outcome}")]
    ZeroProbability { condition: usize, outcome: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("training diverged at step {step}: loss = {loss}")]
    Divergence { step: usize, loss: f64 },
}

pub type Result<T> = core::result::Result<T, CoreError>;
