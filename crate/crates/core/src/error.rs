use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("invalid angle: {0}")]
    InvalidAngle(String),

    #[error("comparison inconclusive at {bits} bits: {what}")]
    Inconclusive { bits: u32, what: String },

    #[error("epsilon {0} too large: kappa would be 0")]
    EpsilonTooLarge(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no admissible power found: {0}")]
    NotFound(String),

    #[error("internal consistency failure: no dichotomy branch for {0}")]
    NoBranch(String),

    #[error("enumeration of {count} vectors exceeds the limit {limit}")]
    SizeLimit { count: u128, limit: u128 },

    #[error("value too large to materialize: {0}")]
    TooLarge(String),

    #[error("ratio condition m_(k+1) > 2 m_k fails at k = {0}")]
    RatioViolation(usize),

    #[error("empty intersection at Cantor level {0}")]
    EmptyIntersection(usize),

    #[error("stage ranges overlap: {0}")]
    Overlap(String),

    #[error("schedule violated: {0}")]
    Schedule(String),

    #[error("parse error: {0}")]
    Parse(String),
}
