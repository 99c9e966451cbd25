use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("support size would exceed budget of {budget} states")]
    BudgetExceeded { budget: usize },
    #[error("fiber size at site {site} exceeds the representable budget {limit}")]
    Overflow { site: i64, limit: u64 },
    #[error("growth function invalid: {0}")]
    InvalidGrowth(String),
    #[error("{what} {value} is outside the built range [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: i64,
        lo: i64,
        hi: i64,
    },
    #[error("base vertex has no neighbors")]
    IsolatedVertex,
    #[error("no lamp step-count convention reproduces the exact product-chain return probability")]
    NoConventionMatches,
    #[error("invalid convention: {0}")]
    InvalidConvention(String),
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),
    #[error("ODE step control underflowed at t = {t}")]
    StiffnessFailure { t: f64 },
    #[error("no feasible set meets the boundary ratio in the search window")]
    EmptyFeasible,
    #[error("origin cluster is isolated")]
    OriginIsolated,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}
