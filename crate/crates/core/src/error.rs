//! Error type shared by all modules.

/// Errors produced by grid construction, residual evaluation and the solvers.
#[derive(Debug, thiserror::Error)]
pub enum HjError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("node {0} is not an interior node")]
    NotInterior(usize),

    #[error("incomplete stencil: {0}")]
    IncompleteStencil(String),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// Gradient descent hit a non-finite loss. Carries the last finite iterate.
    #[error("gradient descent diverged at iteration {iter}")]
    Divergence { iter: usize, last_finite: Vec<f64> },

    #[error("Newton did not converge after {iters} iterations (best residual {best_res:.3e})")]
    NewtonStall { iters: usize, best_res: f64 },

    #[error("marching failed at time step {step}: {source}")]
    Marching {
        step: usize,
        #[source]
        source: Box<HjError>,
    },

    #[error("eigenvalue iteration limit reached (best estimate {best:.6e})")]
    EigenIterationLimit { best: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("stability bound inapplicable: lambda = {0} must be positive")]
    InapplicableBound(f64),

    #[error("Kruzhkov inverse out of domain: 1 - lambda*v = {0:.3e} is not positive")]
    KruzhkovDomain(f64),

    #[error("schedule not monotone: {0}")]
    ScheduleNotMonotone(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, HjError>;
