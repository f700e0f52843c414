use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("invalid configuration: {field}: {message}")]
    Config { field: String, message: String },
    #[error("invalid protocol: {0}")]
    Protocol(String),
    #[error("stratification error: {0}")]
    Stratification(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate domain {domain}: {message}")]
    DegenerateDomain { domain: String, message: String },
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("numerical error: {0}")]
    Numeric(String),
    #[error("filter design error: {0}")]
    Design(String),
    #[error("rating error: {0}")]
    Rating(String),
    #[error("all {} grid points failed: {}", .0.len(), .0.join("; "))]
    GridExhausted(Vec<String>),
    #[error("fold {fold}, strategy {strategy}, method {method}: {source}")]
    Cell {
        fold: String,
        strategy: String,
        method: String,
        #[source]
        source: Box<Error>,
    },
    /// An error shared by several jobs, carried by its message.
    #[error("{0}")]
    Propagated(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn shape(message: impl Into<String>) -> Self {
        Error::Shape(message.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
