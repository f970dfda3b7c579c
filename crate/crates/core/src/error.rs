use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid chain: {0}")]
    InvalidChain(String),

    #[error("invalid model parameters: {0}")]
    InvalidParams(String),

    #[error("infeasible action at state {state}: {reason}")]
    InfeasibleAction { state: String, reason: String },

    #[error("difference undefined at boundary: {0}")]
    Domain(String),

    #[error("value iteration did not converge in {iterations} iterations (last span {last_span:e})")]
    NotConverged { iterations: usize, last_span: f64 },

    #[error("beta search did not converge after {steps} steps; bracket history: {history}")]
    BetaSearch { steps: usize, history: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
