use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("KKT matrix is numerically singular (pivot {pivot:.3e} at column {column}, threshold {threshold:.3e})")]
    LinearSolveSingular {
        column: usize,
        pivot: f64,
        threshold: f64,
    },

    #[error("Newton iteration diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    #[error("both constitutive Jacobians are singular at the given phase point")]
    SingularJacobian,

    #[error("constraint Jacobian is rank deficient; multipliers are not unique")]
    RankDeficientConstraints,

    #[error("unsupported law for this operation: {0}")]
    UnsupportedLaw(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_dim(expected: usize, actual: usize, context: &'static str) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch {
            expected,
            actual,
            context,
        });
    }
    Ok(())
}
