use thiserror::Error;

/// Errors raised by density construction, planning and transport.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("cell {cell} straddles the activation hyperplane of arc {arc}")]
    Straddle { cell: usize, arc: usize },

    #[error("unsupported arc {arc} for exact box transport: {reason}")]
    UnsupportedArc { arc: usize, reason: String },

    #[error("schedule has no arcs")]
    EmptySchedule,

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}
