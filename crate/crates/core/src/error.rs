use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid group: {0}")]
    InvalidGroup(String),
    #[error("invalid group element: {0}")]
    InvalidElement(String),
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("metric generators do not generate the group within radius {radius}")]
    DisconnectedMetric { radius: u64 },
    #[error("the empty configuration has no shift class")]
    EmptyConfiguration,
    #[error("state space exceeds the hard limit of {limit} classes ({count} enumerated so far)")]
    CapsTooLarge { limit: usize, count: usize },
    #[error("invalid caps: {0}")]
    InvalidCaps(String),
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("power iteration did not converge in {iterations} iterations (last change {change:e})")]
    NoConvergence { iterations: usize, change: f64 },
    #[error("right eigenvector has a non-positive entry at state {0}")]
    NonPositiveEigenvector(usize),
    #[error("all mass was killed; nothing left to condition on")]
    ZeroSurvivingMass,
    #[error("no surviving replicates: {0}")]
    NoSurvivors(String),
    #[error("bracket [{lo}, {hi}] does not straddle a sign change of r")]
    BracketNoSignChange { lo: f64, hi: f64 },
    #[error("tightness integral does not converge (tail exponent {0})")]
    DivergentIntegral(f64),
    #[error("mismatched inputs: {0}")]
    Mismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
