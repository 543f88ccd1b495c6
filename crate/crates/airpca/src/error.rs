use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum AirPcaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("ambiguous eigenvector selection: {0}")]
    DegenerateSpectrum(String),

    #[error("iteration did not converge after {iterations} steps; best estimate {best_estimate}")]
    Convergence { iterations: usize, best_estimate: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("problem size out of supported range: {0}")]
    Scale(String),

    #[error("bound precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, AirPcaError>;
