use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("equilibrium x2 does not exist for these parameters ((beta0/delta)(k-1) = {ratio} <= 1)")]
    NoPositiveEquilibrium { ratio: f64 },

    #[error("step h = {h} does not divide the delay r = {r}; nearest admissible step is {suggested}")]
    MisalignedStep { h: f64, r: f64, suggested: f64 },

    #[error("history is negative at s = {s} (value {value})")]
    NegativeHistory { s: f64, value: f64 },

    #[error("line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("{0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
