use thiserror::Error;

/// Errors raised by catalog construction, configuration and solver guards.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("object of {size_bits} bits exceeds cache capacity of {capacity_bits} bits")]
    Oversized { size_bits: u64, capacity_bits: u64 },

    #[error(
        "instance too large for exhaustive search: {combinations} combinations (limit {limit})"
    )]
    InstanceTooLarge { combinations: u128, limit: u128 },

    #[error("unknown sweep parameter `{name}`; valid names: {valid}")]
    UnknownParameter { name: String, valid: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
