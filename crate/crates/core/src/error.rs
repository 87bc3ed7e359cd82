use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure classes surfaced by the numerical pipeline.
///
/// [`Error::is_precision_failure`] separates the errors that go away when the
/// working precision is raised from genuine numerical or usage errors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("recurrence step divides by zero at {at}")]
    SingularStep { at: String },

    #[error("residual {residual:e} exceeds tolerance {tolerance:e} at {at}")]
    PrecisionExhausted { at: String, residual: f64, tolerance: f64 },

    #[error("antidiagonal {antidiagonal} system is singular at working precision")]
    LinearSolveSingular { antidiagonal: usize },

    #[error("cancellation lost {lost_digits:.1} digits (guard is {guard_digits})")]
    CancellationDetected { lost_digits: f64, guard_digits: u32 },

    #[error("Cholesky pivot {pivot} is not positive; raise the working precision")]
    CholeskyNotPd { pivot: usize },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("constrained submatrix is not positive definite (pivot {pivot})")]
    SubmatrixNotPd { pivot: usize },

    #[error("eigen-iteration did not converge after {iterations} steps")]
    EigenNotConverged { iterations: usize },

    #[error("coefficient table lacks moment {index}")]
    CoverageError { index: String },

    #[error("no local minimum in [{lo}, {hi}]")]
    NoMinimumFound { lo: String, hi: String },

    #[error("cap {cap} does not exceed the minimum value {minimum}")]
    CapBelowMinimum { cap: String, minimum: String },

    #[error("reached {limit} before the functional exceeded the cap on the {side} side")]
    NeighborCollision { side: &'static str, limit: String },
}

impl Error {
    /// True for failures that signal insufficient working precision.
    pub fn is_precision_failure(&self) -> bool {
        matches!(
            self,
            Error::PrecisionExhausted { .. }
                | Error::LinearSolveSingular { .. }
                | Error::CancellationDetected { .. }
                | Error::CholeskyNotPd { .. }
                | Error::SubmatrixNotPd { .. }
                | Error::NotPositiveDefinite { .. }
        )
    }
}
