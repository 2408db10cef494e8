use num_complex::Complex64;

/// Errors reported by the numerical lab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("spectral parameter {lambda} lies within {distance:e} of the eigenvalue {nearest}")]
    NearSpectrum {
        lambda: Complex64,
        nearest: f64,
        distance: f64,
    },
    #[error("linear solver breakdown: {0}")]
    SolverBreakdown(String),
    #[error("eigensolver did not converge: {0}")]
    EigenNonConvergence(String),
    #[error("truncation tail {tail:e} exceeds tolerance {tolerance:e}; K >= {required_k} is needed")]
    TailAboveTolerance {
        tail: f64,
        tolerance: f64,
        required_k: usize,
    },
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of a numerical kernel, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NearSpectrum { .. }
                | Error::SolverBreakdown(_)
                | Error::EigenNonConvergence(_)
                | Error::TailAboveTolerance { .. }
                | Error::Quadrature(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
