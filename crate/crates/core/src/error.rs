use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Some `beta_i <= 0`, so the curvature matrix `Q = diag(2 beta)` cannot be inverted.
    #[error("curvature matrix Q is singular: beta[{index}] = {value}")]
    SingularCurvature { index: usize, value: f64 },

    #[error("spectral condition violated: radius {radius} >= 1")]
    SpectralCondition { radius: f64 },

    #[error("singular linear system in {context}")]
    Singular { context: &'static str },

    #[error("matrix is not positive definite: smallest symmetric eigenvalue {min_eigenvalue}")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("best-response iteration did not converge in {iterations} steps (residual {residual:e})")]
    MaxIterations {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("problem size {n} exceeds the exhaustive-search cap {cap}; use the SDP rounding pipeline")]
    TooLarge { n: usize, cap: usize },

    #[error("SDP solver did not converge after {iterations} sweeps (stationarity {stationarity:e})")]
    SdpNonConvergence { iterations: usize, stationarity: f64 },

    #[error("topology generation failed: {0}")]
    Topology(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
