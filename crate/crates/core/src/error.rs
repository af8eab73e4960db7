use thiserror::Error;

/// Errors raised by the solvers and their numerical building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is numerically singular: pivot {pivot:e} below floor {floor:e} at elimination step {step}")]
    SingularMatrix { step: usize, pivot: f64, floor: f64 },

    #[error("factorization is stale: a column was replaced without refactoring")]
    StaleFactorization,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("step rule `{rule}` requires the {constant} constant, which the objective does not provide")]
    MissingConstant {
        rule: &'static str,
        constant: &'static str,
    },

    #[error("pivot direction has no negative entry (smallest entry {min_entry:e}); the basis has degenerated")]
    NoNegativeEntry { min_entry: f64 },

    #[error("reconstruction residual {residual:e} exceeds tolerance {tolerance:e}")]
    ReconstructionDrift { residual: f64, tolerance: f64 },

    #[error("multiplier {value:e} of coordinate {index} lies in the strict-complementarity band")]
    DegenerateOptimum { index: usize, value: f64 },

    #[error("reference point is not stationary: FW gap {gap:e}")]
    NotStationary { gap: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Strips iteration context and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtIteration { source, .. } => source.root(),
            other => other,
        }
    }

    /// Whether the error is a numerical breakdown of the pivoting machinery
    /// (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::SingularMatrix { .. }
                | Error::StaleFactorization
                | Error::NoNegativeEntry { .. }
                | Error::ReconstructionDrift { .. }
                | Error::InvariantViolation(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
