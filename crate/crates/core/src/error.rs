use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("length mismatch in {context}: expected {expected}, got {actual}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("{context}: matrix is not symmetric (asymmetry {residual:.3e} exceeds tolerance {tol:.3e})")]
    NotSymmetric {
        context: &'static str,
        residual: f64,
        tol: f64,
    },

    #[error("{context}: matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { context: &'static str, min_eig: f64 },

    #[error("{context}: matrix is not positive definite (min eigenvalue {min_eig:.3e})")]
    NotPd { context: &'static str, min_eig: f64 },

    #[error("{context}: non-finite value encountered")]
    NonFinite { context: &'static str },

    #[error("risk level must lie in (0, 1]; got {value}")]
    InvalidRiskLevel { value: f64 },

    #[error("risk level must lie in (0, 1) for worst-case CVaR; got {value}")]
    RiskLevelNotStrict { value: f64 },

    #[error("sample set must be nonempty")]
    EmptySampleSet,

    #[error("{context}: failed to converge within {max_iter} iterations (residual {residual:.3e})")]
    NoConvergence {
        context: &'static str,
        max_iter: usize,
        residual: f64,
    },

    #[error("closed loop is unstable: spectral radius {rho:.6}")]
    UnstableClosedLoop { rho: f64 },

    #[error("disturbance mean must be zero; got norm {norm:.3e}")]
    NonzeroDisturbanceMean { norm: f64 },

    #[error("distribution is not a member of the required moment ambiguity set ({context})")]
    MembershipFailure { context: &'static str },

    #[error("too few samples to resolve the alpha-tail: need at least {required}, got {actual}")]
    TooFewSamples { required: usize, actual: usize },

    #[error("second-moment matrix has malformed block structure: {detail}")]
    MalformedBlock { detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
