use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unreadable trade header: {0}")]
    Header(String),

    #[error("{rejected} of {total} rows malformed (limit 10%); first problem: {first}")]
    TooManyRejects {
        rejected: usize,
        total: usize,
        first: String,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("tail fit refused: {0}")]
    TailFitRefused(String),

    #[error("unknown trader `{0}`")]
    UnknownTrader(String),

    #[error("window of {got} slices is shorter than the required {need}")]
    WindowTooShort { got: usize, need: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("partitions share no elements")]
    DisjointPartitions,

    #[error("schema mismatch: expected {expected} columns, got {got}")]
    Schema { expected: usize, got: usize },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("invalid market spec: {0}")]
    MarketSpec(String),

    #[error("time zone conversion failed for {0}")]
    TimeZone(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
