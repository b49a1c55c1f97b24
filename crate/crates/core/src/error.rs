use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    Divergence { iterations: usize, residual: f64 },

    #[error("degenerate signal on channel {channel}: {reason}")]
    DegenerateSignal { channel: usize, reason: String },

    #[error("fit diverged at iteration {iteration}: non-finite loss (last parameters {last_params:?})")]
    FitDivergence {
        iteration: usize,
        last_params: Vec<f64>,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
