use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An index or argument lies outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A coefficient was requested outside the window where the scheme is certified.
    #[error("coefficient (n={n}, k={k}) outside scheme window [{valid_from}, {}]", .max_degree.map_or("inf".to_string(), |m| m.to_string()))]
    CoefficientWindow {
        n: u64,
        k: u64,
        valid_from: u64,
        max_degree: Option<u64>,
    },

    /// A target function specification failed validation.
    #[error("invalid function spec `{label}`: {reason}")]
    InvalidSpec { label: String, reason: String },

    /// The configuration does not certify a bound the operation needs.
    #[error("certification error: {0}")]
    Certification(String),

    /// A replayed coin stream ran out.
    #[error("coin replay exhausted after {consumed} coins ({requested} more requested)")]
    ReplayExhausted { consumed: u64, requested: u64 },

    /// A draw of the truncation variable exceeded the configured cap.
    #[error("truncation index exceeds cap {cap}")]
    TruncationCap { cap: u64 },

    /// The estimator cannot evaluate this truncation index with the chosen scheme.
    #[error("evaluation limit: {0}")]
    EvaluationLimit(String),

    /// Malformed input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Invalid configuration (CLI or config file).
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
