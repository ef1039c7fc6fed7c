use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error("shard {shard} has {size} members, below the minimum")]
    ShardTooSmall { shard: usize, size: usize },

    #[error("node {node} assigned to shard {shard}, but only {shards} shards exist")]
    IndexOutOfRange { node: usize, shard: usize, shards: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("trust value for node {node} is not finite")]
    NonFiniteTrust { node: usize },

    #[error("node {node} never served as leader this episode")]
    NeverLed { node: usize },

    #[error("shard of size {size} is too small for indirect feedback")]
    ShardTooSmallForIndirect { size: usize },

    #[error("nodes {i} and {j} are not in the same shard")]
    DifferentShards { i: usize, j: usize },

    #[error("proposal violates the shard minimum: shard {shard} has {size} members")]
    ConstraintViolation { shard: usize, size: usize },

    #[error("baseline throughput is zero")]
    DivisionByZero,

    #[error("need at least {needed} rows, have {have}")]
    InsufficientRows { needed: usize, have: usize },

    #[error("search space of {shards}^{nodes} assignments exceeds the enumeration cap")]
    TooLarge { nodes: usize, shards: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("strategy `{strategy}` failed: {reason}")]
    Strategy { strategy: String, reason: String },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
