use thiserror::Error;

/// Errors raised by the pricing engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum XvaError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite{0}")]
    NotPositiveDefinite(String),

    #[error("stability bound violated: (dt/2)*max(c_p, c_m) = {0} >= 1")]
    StabilityViolation(f64),

    #[error("uniform sample {0} outside the open unit interval")]
    DomainError(f64),

    #[error("kernel system is singular even after jitter")]
    SingularKernel,

    #[error("GPR needs at least 2 training points, got {0}")]
    InsufficientData(usize),

    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
}

impl XvaError {
    /// Name of the subsystem that raised the error, used by the CLI report.
    pub fn module(&self) -> &'static str {
        match self {
            XvaError::InvalidParameter(_) | XvaError::StabilityViolation(_) => "market-model",
            XvaError::DimensionMismatch { .. } => "market-model",
            XvaError::NotPositiveDefinite(_) => "linear-algebra",
            XvaError::DomainError(_) => "stochastic-engine",
            XvaError::SingularKernel | XvaError::InsufficientData(_) => "gpr",
            XvaError::GridTooCoarse(_) => "benchmarks",
        }
    }
}

pub type Result<T> = std::result::Result<T, XvaError>;
