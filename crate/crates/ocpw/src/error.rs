use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Non-finite floating-point data (NaN/Inf) is rejected up front.
    #[error("unsupported value: {0}")]
    UnsupportedValue(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("too few samples: {0}")]
    TooFewSamples(String),

    #[error("instance too large: {0}")]
    TooLargeInstance(String),

    #[error("incomplete gather: {0}")]
    IncompleteGather(String),

    /// Ranks derived different plans from supposedly identical gathered
    /// estimates. Must never happen; fatal.
    #[error("consistency fault: {0}")]
    ConsistencyFault(String),

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn decode(msg: impl Into<String>) -> Self {
        Error::Decode(msg.into())
    }
}
