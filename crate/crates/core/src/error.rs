use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("kernel order must be positive, got {0}")]
    InvalidOrder(f64),

    #[error("only dimensions 1 and 2 are supported, got {0}")]
    InvalidDimension(usize),

    #[error("kernel of order {order} in dimension {dim} is singular at |x| = {radius:e}")]
    SingularInput { order: f64, dim: usize, radius: f64 },

    #[error("convolution grid cannot resolve the kernel: change under refinement {change:e} exceeds tolerance {tolerance:e}")]
    ResolutionInsufficient { change: f64, tolerance: f64 },

    #[error("spectral density is singular at the origin")]
    SpectralSingularity,

    #[error("quadrature did not converge: {0}")]
    QuadratureNonconvergence(String),

    #[error("invalid correlation kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("coefficient validation failed: {inequality} violated at {location} (margin {margin:e})")]
    ValidationFailure {
        inequality: String,
        location: String,
        margin: f64,
    },

    #[error("time step {dt:e} exceeds the monotonicity bound {bound:e}")]
    StepSize { dt: f64, bound: f64 },

    #[error("non-finite field value at t = {t} (step {step})")]
    Instability { t: f64, step: u64 },

    #[error("epsilon {epsilon} is infeasible: it must lie in (0, {gap}) where gap = kappa - gamma (d + 2) / (1 + beta)")]
    InfeasibleEpsilon { epsilon: f64, gap: f64 },

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("ensemble members disagree: {0}")]
    MismatchedConfig(String),

    #[error("ensemble of {got} paths is too small, need at least {needed}")]
    EnsembleTooSmall { got: usize, needed: usize },
}
