use thiserror::Error;

/// Every failure the solver pipeline can report.
#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("profiles live on different grids")]
    GridMismatch,

    #[error("shooting could not bracket the decaying solution on initial heights [{lo}, {hi}]")]
    NoBracket { lo: f64, hi: f64 },

    #[error("residual target {target:e} unreachable on this grid (best {achieved:e})")]
    GridTooCoarse { target: f64, achieved: f64 },

    #[error("radial operator is numerically singular (pivot {pivot:e} at row {row})")]
    SingularOperator { row: usize, pivot: f64 },

    #[error("degenerate far-field window [{lo}, {hi}]: {reason}")]
    DegenerateWindow { lo: f64, hi: f64, reason: String },

    #[error("asymptotic classification unsupported: {0}")]
    Unsupported(String),

    #[error("constant fit too poor: relative rms {rms:.4} exceeds {limit}")]
    PoorFit { rms: f64, limit: f64 },

    #[error("mu = {mu} must exceed {threshold}")]
    BadMu { mu: f64, threshold: f64 },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("landscape maximum at ({r}, {rho}) lies on the window boundary")]
    BoundaryMaximum { r: f64, rho: f64, value: f64 },

    #[error("Newton iteration diverged at step {iteration}: residual {residual:e}")]
    DivergedNewton { iteration: usize, residual: f64 },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl SolverError {
    /// Stable variant name, used in machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            SolverError::InvalidGrid(_) => "InvalidGrid",
            SolverError::InvalidParameter(_) => "InvalidParameter",
            SolverError::GridMismatch => "GridMismatch",
            SolverError::NoBracket { .. } => "NoBracket",
            SolverError::GridTooCoarse { .. } => "GridTooCoarse",
            SolverError::SingularOperator { .. } => "SingularOperator",
            SolverError::DegenerateWindow { .. } => "DegenerateWindow",
            SolverError::Unsupported(_) => "Unsupported",
            SolverError::PoorFit { .. } => "PoorFit",
            SolverError::BadMu { .. } => "BadMu",
            SolverError::OutOfRange(_) => "OutOfRange",
            SolverError::BoundaryMaximum { .. } => "BoundaryMaximum",
            SolverError::DivergedNewton { .. } => "DivergedNewton",
            SolverError::Io(_) => "Io",
            SolverError::Json(_) => "Json",
            SolverError::Csv(_) => "Csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, SolverError>;
