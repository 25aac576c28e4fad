//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid norm parameters: {0}")]
    InvalidNorm(String),

    #[error("zero vector where a nonzero vector is required")]
    ZeroVector,

    #[error("degenerate metric tensor: smallest eigenvalue {0:.3e} below tolerance")]
    DegenerateHessian(f64),

    #[error("Newton iteration for the inverse Legendre transform diverged (residual {0:.3e})")]
    NewtonDivergence(f64),

    #[error("coincident points: the skew quotient needs x != y")]
    CoincidentPoints,

    #[error("step size underflow: local error {err:.3e} still above tolerance at dt = {dt:.3e}")]
    StepSizeUnderflow { dt: f64, err: f64 },

    #[error("unsupported curvature parameters: k = {k}, delta = {delta} (only k = delta = 0)")]
    UnsupportedCurvature { k: f64, delta: f64 },

    #[error("density has zero mass on the grid")]
    ZeroMass,

    #[error("density has zero second moment")]
    ZeroSecondMoment,

    #[error("transport support too large: {got} nodes exceeds the {limit}-node limit")]
    SupportTooLarge { got: usize, limit: usize },

    #[error("infeasible marginals: {0}")]
    InfeasibleMarginals(String),

    #[error("Sinkhorn did not converge: marginal error {0:.3e} after the iteration cap")]
    NonConvergence(f64),

    #[error("explicit scheme unstable: dt = {dt:.3e} exceeds the bound {bound:.3e}")]
    StabilityViolation { dt: f64, bound: f64 },

    #[error("negative density {0:.3e} below the clip tolerance")]
    NegativeDensity(f64),

    #[error("linear solve failed: residual {0:.3e} after the iteration cap")]
    LinearSolveFailure(f64),

    #[error("norm is not symmetric: |‖x‖ - ‖-x‖| = {0:.3e} on a sampled direction")]
    AsymmetricNorm(f64),

    #[error("degenerate scale: s = {s} must lie in [0, T) with T = {t_param}")]
    DegenerateScale { s: f64, t_param: f64 },

    #[error("degenerate window: entropy change {0:.3e} too small to normalize against")]
    DegenerateWindow(f64),

    #[error("invalid p = {0}: the tent construction needs p > 2")]
    InvalidP(f64),

    #[error("invalid tangent triple: {0}")]
    InvalidTriple(String),

    #[error("scaled support does not fit the grid")]
    SupportOverflow,

    #[error("boundary cells carry mass {0:.3e}; the truncated box is too small")]
    BoundaryLeak(f64),

    #[error("inconclusive slope: |{slope:.3e}| below 3x the noise estimate {noise:.3e}")]
    InconclusiveSlope { slope: f64, noise: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
