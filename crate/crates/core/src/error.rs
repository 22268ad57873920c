use thiserror::Error;

/// Errors raised by the design, estimation and verification layers.
#[derive(Debug, Error)]
pub enum MrdError {
    /// A design or model configuration violates one of its bounds.
    #[error("configuration error: {0}")]
    Config(String),

    /// The input does not have the structure an operation requires.
    #[error("structure error: {0}")]
    Structure(String),

    /// The input is structurally valid but does not identify a unique answer.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    /// An estimator precondition (type presence, block size) failed.
    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("enumeration refused: {count} assignments exceed the limit of {limit}")]
    EnumerationLimit { count: u128, limit: u128 },

    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<MrdError>,
    },

    /// Malformed or inconsistent input data (CSV/JSON ingestion).
    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, MrdError>;
