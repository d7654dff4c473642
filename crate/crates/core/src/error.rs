use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("{what} is outside its domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("market state needs exactly 22 lags, got {0}")]
    StateLength(usize),

    #[error("pole of v(x, theta): theta * x = 1")]
    Pole,

    #[error("recursion left its domain at step {step}: {reason}")]
    RecursionDomain { step: usize, reason: String },

    #[error("risk-neutral map is singular: theta * Y* = {0} >= 1")]
    MappingSingular(f64),

    #[error("risk premia are not arbitrage free: nu2 - lambda - 1/2 = {0}")]
    NotArbitrageFree(f64),

    #[error("degenerate variance at index {0}")]
    DegenerateVariance(usize),

    #[error("likelihood domain error: noncentrality {theta} at observation {index}")]
    LikelihoodDomain { index: usize, theta: f64 },

    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("need at least {needed} observations, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("empty input")]
    Empty,

    #[error("implied volatility: price {price} outside no-arbitrage bounds ({lower}, {upper})")]
    InversionDomain { price: f64, lower: f64, upper: f64 },

    #[error("calibration infeasible: attained implied volatility range [{lo}, {hi}]")]
    CalibrationInfeasible { lo: f64, hi: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: {msg}")]
    Validation { line: usize, msg: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParams(_)
                | Error::Domain { .. }
                | Error::StateLength(_)
                | Error::NotArbitrageFree(_)
                | Error::LengthMismatch(..)
                | Error::TooShort { .. }
                | Error::Empty
                | Error::Parse { .. }
                | Error::Validation { .. }
                | Error::Config(_)
                | Error::Io(_)
        )
    }
}
