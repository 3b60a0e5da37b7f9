use thiserror::Error;

/// Errors raised by the tracking core.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of a geometric or statistical map.
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear-algebra step failed (e.g. a non positive-definite innovation covariance).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Frames were supplied out of order.
    #[error("sequence error: frame {got} does not follow frame {previous}")]
    Sequence { previous: u32, got: u32 },

    /// A malformed line in an input file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Detections and embeddings do not line up.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// Invalid or unknown configuration.
    #[error("config error: {0}")]
    Config(String),

    /// Ground truth and hypotheses cannot be evaluated together.
    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
