use alloc::string::String;

/// Errors raised by the sampling core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("point set is empty")]
    EmptyCloud,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("label count {labels} does not match point count {points}")]
    LabelLength { labels: usize, points: usize },
    #[error("requested {kappa} neighbours but the point set has only {available} points")]
    KappaTooLarge { kappa: usize, available: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape {kind} is not defined in dimension {dim}")]
    UnsupportedShape { kind: &'static str, dim: usize },
    #[error("ray rejection sampling exceeded {0} redraws")]
    RejectionLimit(usize),
    #[error("histogram edges differ")]
    EdgeMismatch,
    #[error("signature is missing {0} channels")]
    MissingChannels(&'static str),
    #[error("signatures are not comparable: {0}")]
    Incomparable(String),
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
