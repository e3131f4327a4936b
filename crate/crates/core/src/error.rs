use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("metric evaluated at the zero vector")]
    ZeroVector,
    #[error("Randers condition violated: |b|_(a^-1) = {norm} >= 1")]
    RandersCondition { norm: f64 },
    #[error("metric matrix is not positive definite at the sampled point")]
    NotPositiveDefinite,
    #[error("strict convexity lost: {0}")]
    Convexity(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("normal solve landed on the wrong branch (V·ν = {dot})")]
    WrongBranch { dot: f64 },
    #[error("direction outside the chart: {0}")]
    OutOfChart(String),
    #[error("point is {distance:e} away from the boundary")]
    OffBoundary { distance: f64 },
    #[error("special-form gate failed (max violation {violation:e})")]
    GateFailed { violation: f64 },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("no fan candidate reaches the query point")]
    NoCandidate,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
}
