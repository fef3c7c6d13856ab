use thiserror::Error;

/// Errors produced by the partitioning, balancing and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("model uninitialized")]
    ModelUninitialized,

    #[error("non-positive measurement: {units} units in {time} s")]
    NonPositiveMeasurement { units: u64, time: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("solver divergence: {0}")]
    SolverDivergence(String),

    #[error("infeasible minimums: {n} units cannot give {p} processors at least {min_units} each")]
    InfeasibleMinimums { n: u64, p: usize, min_units: u64 },

    #[error("invalid time: {0}")]
    InvalidTime(f64),

    #[error("too few units: {n} units for {p} processors")]
    TooFewUnits { n: u64, p: usize },

    #[error("grid infeasible: {0}")]
    GridInfeasible(String),

    #[error("invalid measurement: {0}")]
    InvalidMeasurement(String),

    #[error("instance too large for oracle: {0} compositions")]
    OracleTooLarge(f64),

    #[error("insufficient memory for {0} elements")]
    InsufficientMemory(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error("executor failed in round {round}: {message}")]
    Executor { round: u32, message: String },
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
