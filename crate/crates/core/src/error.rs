use thiserror::Error;

/// Errors raised across the toolkit.
///
/// The variants map onto the CLI exit codes: configuration problems exit with
/// 2, nonlinear solver failures with 3 and eigensolver failures with 4.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("nonlinear solve did not converge after {iterations} iterations (last residual ratio {last_ratio:.3e})")]
    Convergence {
        iterations: usize,
        last_ratio: f64,
        trace: Vec<f64>,
    },

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("conditioning error: {0}")]
    Conditioning(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parameter(_) | Error::InvalidGeometry(_) => 2,
            Error::Convergence { .. } | Error::Singular(_) | Error::Domain(_) => 3,
            Error::Eigen(_) => 4,
            _ => 1,
        }
    }
}
