use thiserror::Error;

/// Errors raised by the model, integrator and diagnostic routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("position {x:?} is at the singularity of the potential")]
    Singularity { x: Vec<f64> },
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    #[error("non-finite state at step {step} (t = {t}); last finite state x = {last_x:?}, v = {last_v:?}")]
    NonFinite {
        step: u64,
        t: f64,
        last_x: Vec<f64>,
        last_v: Vec<f64>,
    },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("control path construction failed: {0}")]
    ControlPath(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
