use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument violates an operation's precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A scheme step produced a state where the model coefficients cannot be evaluated.
    #[error("{scheme} left the evaluable domain of `{model}` at step {step} (state {state})")]
    Domain {
        model: String,
        scheme: &'static str,
        step: usize,
        state: f64,
    },

    /// Inputs that must share a Brownian grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Measurement sits at the Monte Carlo noise floor.
    #[error("noise floor: {0}")]
    NoiseFloor(String),

    /// Experiment configuration rejected before simulation.
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
