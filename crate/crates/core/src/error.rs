use thiserror::Error;

#[derive(Debug, Error)]
pub enum BgkError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },

    #[error("degenerate state: {0}")]
    Degenerate(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("scheme violation: {0}")]
    Scheme(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("fit error: {0}")]
    Fit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, BgkError>;
