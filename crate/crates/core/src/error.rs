use thiserror::Error;

#[derive(Debug, Error)]
pub enum PtychoError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("region out of bounds: {0}")]
    Bounds(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("infeasible decomposition: {0}")]
    InfeasibleDecomposition(String),

    #[error("plan error: {0}")]
    Plan(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("iterate became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error(
        "subdomain {subdomain} has an unilluminated pixel at ({row}, {col}); \
         the normal operator A*A must be non-singular inside every subdomain"
    )]
    ZeroDensity {
        subdomain: usize,
        row: usize,
        col: usize,
    },

    #[error("expected photon counts too large ({0:e}); use a smaller noise scale")]
    CountOverflow(f64),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("report error: {0}")]
    Report(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = PtychoError> = std::result::Result<T, E>;
