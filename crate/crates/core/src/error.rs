use thiserror::Error;

/// Every failure mode the simulator can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error for key `{key}`: {message}")]
    Parse { key: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("subgraph violation: {0}")]
    SubgraphViolation(String),

    #[error("Lipschitz violation: {0}")]
    LipschitzViolation(String),

    #[error("inconsistent state: {0}")]
    State(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("solver did not converge: {0}")]
    Solver(String),

    #[error("interpolation error: {0}")]
    Interpolation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
