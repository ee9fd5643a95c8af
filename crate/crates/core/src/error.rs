//! Error types shared across the solver.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("domain has no interior nodes")]
    EmptyDomain,

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("evaluation at z = 0 with a Laurent factor z^-{shift}")]
    PoleAtOrigin { shift: u32 },

    #[error("differential is identically zero")]
    DegenerateDifferential,

    #[error("root finding did not reach the residual target (worst residual {worst:.3e})")]
    RootFinding { worst: f64 },

    #[error("model constant recurrence produced a nonpositive d_{index} = {value}")]
    InfeasibleConstants { index: usize, value: f64 },

    #[error("field diverged: |w| exceeded {limit} at a node")]
    DivergedField { limit: f64 },

    #[error("unsupported metric kind for this operation: {0}")]
    UnsupportedMetric(String),

    #[error("subsolution construction failed: E grew past 2^60 without verifying")]
    ConstructionFailure,

    #[error("linear solve did not converge: best residual {best:.3e} after {iters} iterations (target {target:.3e})")]
    LinearNoConvergence { best: f64, iters: usize, target: f64 },

    #[error("outer iteration did not converge after {iters} iterations (last increment {last_delta:.3e}, residual {last_residual:.3e})")]
    OuterNoConvergence {
        iters: usize,
        last_delta: f64,
        last_residual: f64,
    },

    #[error("monotonicity violated by {amount:.3e} at outer step {step} (allowance {allowance:.3e})")]
    SolverInconsistency {
        step: usize,
        amount: f64,
        allowance: f64,
    },

    #[error("exhaustion levels non-monotone: level {level} dips {amount:.3e} below the previous level (allowance {allowance:.3e})")]
    ExhaustionInconsistency {
        level: usize,
        amount: f64,
        allowance: f64,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("box bounds violated: lower exceeds upper by {0:.3e}")]
    BoxViolation(f64),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
