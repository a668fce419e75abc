use thiserror::Error;

/// Errors raised across model construction, sampling and inference.
#[derive(Debug, Error)]
pub enum Error {
    #[error("column `{column}`: auxiliary quantiles must include tau = 0 and tau = 1")]
    MissingBounds { column: String },

    #[error("column `{column}`: auxiliary quantiles out of order ({detail})")]
    NonMonotone { column: String, detail: String },

    #[error("column `{column}`: need at least 3 auxiliary quantiles, got {count}")]
    TooFew { column: String, count: usize },

    #[error("value {value} lies outside the support [{lower}, {upper}]")]
    OutOfSupport { value: f64, lower: f64, upper: f64 },

    #[error("marginal CDF is degenerate at {value} (F = {level})")]
    DegenerateCdf { value: f64, level: f64 },

    #[error("matrix is numerically singular (condition number {condition:.3e})")]
    SingularSubmatrix { condition: f64 },

    #[error("interpolation knots decrease at value {value}")]
    NonMonotoneKnots { value: f64 },

    #[error("need {needed} retained draws, only {available} available")]
    InsufficientDraws { needed: usize, available: usize },

    #[error("design matrix is rank deficient")]
    RankDeficient,

    #[error("solver did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("need at least 2 imputations to combine, got {0}")]
    TooFewImputations(usize),

    #[error("likelihood maximized at the boundary (rho = {rho})")]
    BoundaryEstimate { rho: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("chain failed at sweep {sweep}: {source}")]
    Chain {
        sweep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
