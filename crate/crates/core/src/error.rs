use thiserror::Error;

/// Errors raised by the simulator, the fitting engine and the front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numerical failure at t = {time:e} s: {reason}")]
    Numerical { time: f64, reason: String },

    #[error("trajectory covers [{start:e}, {end:e}] s but [{need_start:e}, {need_end:e}] s was requested")]
    Coverage { start: f64, end: f64, need_start: f64, need_end: f64 },

    #[error("parameter layout mismatch: model {model} expects {expected} parameters, got {got}")]
    Layout { model: String, expected: usize, got: usize },

    #[error("fit did not converge after {iterations} iterations: {reason}")]
    FitFailed { iterations: usize, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
