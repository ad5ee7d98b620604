use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("tail values differ ({left_a}, {right_a}) vs ({left_b}, {right_b}); L1 distance is infinite")]
    MismatchedTails {
        left_a: f64,
        right_a: f64,
        left_b: f64,
        right_b: f64,
    },

    #[error("invalid step function: {0}")]
    InvalidStepFunction(String),

    #[error("invalid initial data: {0}")]
    InvalidInitialData(String),

    #[error("more than {max_events} collisions inside one nominal step starting at t = {t}; reduce dt")]
    StepTooLarge { t: f64, max_events: usize },

    #[error("flux argument {0} lies outside [-1/2, 1/2]")]
    OutOfRange(f64),

    #[error("jump height {0:e} is too small to define a shock")]
    DegenerateJump(f64),

    #[error("cluster index {index} out of range ({clusters} clusters)")]
    NoSuchShock { index: usize, clusters: usize },

    #[error("function is not constant outside [-{bound}, {bound}]")]
    UnboundedSupport { bound: f64 },

    #[error("probe time window [{lo}, {hi}] is not inside (0, {t_final})")]
    ProbeOutOfWindow { lo: f64, hi: f64, t_final: f64 },

    #[error("doubling window violated: eps + delta = {sum} must be < min(sigma, T - tau) = {limit}")]
    WindowViolation { sum: f64, limit: f64 },

    #[error("CFL violated: dt = {dt} exceeds {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("initial distance {0:e} is too small to form a stability ratio")]
    ZeroInitialDistance(f64),

    #[error("input CDF is not non-decreasing: {0}")]
    NonMonotoneInput(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
