use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("iterate {k} is infeasible for the regularizer (objective is +inf)")]
    Infeasible { k: usize },

    #[error("run diverged at iteration {k}: suboptimality {value:e} exceeds {threshold:e}; the step size is likely too large")]
    Diverged { k: usize, value: f64, threshold: f64 },

    #[error("reference solve did not converge within {iterations} iterations (residual {residual:e})")]
    ReferenceNotConverged { iterations: usize, residual: f64 },

    #[error("problem has no reference optimum")]
    MissingReference,

    #[error("staleness bound violated: component {component} is {age} iterations old at k={k}, bound is {bound}")]
    StalenessViolated { component: usize, age: usize, k: usize, bound: usize },

    #[error("trace too short: {0}")]
    TraceTooShort(String),

    #[error("sequence hypothesis violated at k={k}: {detail}")]
    HypothesisViolated { k: usize, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
