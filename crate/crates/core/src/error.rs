use thiserror::Error;

/// Errors raised anywhere in the simulator pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration is internally inconsistent or out of range.
    #[error("configuration error: {0}")]
    Config(String),

    /// The input carries no usable energy (zero matrix, zero projection, all-zero amplitudes).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A prediction or dataset record fails schema validation.
    #[error("validation error in sample {sample}, field `{field}`: {message}")]
    Validation {
        sample: u64,
        field: String,
        message: String,
    },

    /// A dataset file could not be parsed or is inconsistent.
    #[error("format error: {0}")]
    Format(String),

    /// A prediction file does not follow the exchange schema.
    #[error("prediction schema error: {0}")]
    Schema(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
