use alloc::string::String;
use alloc::vec::Vec;

/// Errors produced by the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("duplicate class name `{0}`")]
    DuplicateClass(String),
    #[error("empty class name")]
    EmptyClassName,
    #[error("cross-mapping references unknown class `{0}`")]
    UnknownClass(String),
    #[error("cross-mapping `{from}` -> `{to}` must go from a DESED class to a MAESTRO class")]
    MappingDirection { from: String, to: String },
    #[error("invalid events: {}", .0.len())]
    InvalidEvents(Vec<(usize, EventError)>),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("nothing to evaluate: {0}")]
    Empty(String),
}

/// Per-event validation failure.
#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum EventError {
    #[error("offset {offset} is not after onset {onset}")]
    DegenerateInterval { onset: f64, offset: f64 },
    #[error("onset {0} is negative")]
    NegativeOnset(f64),
    #[error("class index {0} is outside the vocabulary")]
    UnknownClassIndex(usize),
    #[error("confidence {0} is outside [0, 1]")]
    Confidence(f64),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
