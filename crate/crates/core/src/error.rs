use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad class of a failure; the command-line driver maps these to exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    /// The inputs violate a documented invariant.
    Validation,
    /// The numerics failed while running on valid inputs.
    Numerical,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("B Bᵀ is not proportional to U R⁻¹ Uᵀ: {0}")]
    NotProportional(String),
    #[error("control weight R is singular on the controlled inputs")]
    SingularWeight,
    #[error("coordinate {coordinate} has noise but no control authority")]
    NoiseOnUncontrolled { coordinate: usize },
    #[error("control map U has no nonzero entries")]
    NoControlAuthority,
    #[error("stored λ = {given} disagrees with the value {computed} implied by B, U, R")]
    LambdaMismatch { given: f64, computed: f64 },
    #[error("{0} cost is not a quadratic form")]
    NonQuadraticCost(&'static str),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("stencil offset {offset} on axis {axis} does not fit cutoff {cutoff}")]
    CutoffTooSmall { axis: usize, offset: usize, cutoff: usize },
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("desirability {psi:e} below floor at state {state:?}")]
    DesirabilityUnderflow { state: Vec<f64>, psi: f64 },
    #[error("time step {dt} exceeds the stability limit {limit}")]
    StabilityViolation { dt: f64, limit: f64 },
    #[error("finite-difference solution became unstable at t = {time}")]
    Unstable { time: f64 },
    #[error("state {state:?} lies outside the grid interior")]
    OutOfDomain { state: Vec<f64> },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NonFinite(_)
            | Error::DesirabilityUnderflow { .. }
            | Error::Unstable { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Validation,
        }
    }

    /// Stable machine-readable identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NotProportional(_) => "not_proportional",
            Error::SingularWeight => "singular_weight",
            Error::NoiseOnUncontrolled { .. } => "noise_on_uncontrolled",
            Error::NoControlAuthority => "no_control_authority",
            Error::LambdaMismatch { .. } => "lambda_mismatch",
            Error::NonQuadraticCost(_) => "non_quadratic_cost",
            Error::InvalidProblem(_) => "invalid_problem",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::CutoffTooSmall { .. } => "cutoff_too_small",
            Error::NonFinite(_) => "non_finite",
            Error::DesirabilityUnderflow { .. } => "desirability_underflow",
            Error::StabilityViolation { .. } => "stability_violation",
            Error::Unstable { .. } => "unstable",
            Error::OutOfDomain { .. } => "out_of_domain",
        }
    }
}
