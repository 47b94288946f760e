use thiserror::Error;

#[derive(Debug, Error)]
pub enum LadderError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("rejection sampler gave up after {attempts} attempts (empirical acceptance rate {acceptance_rate:.3e})")]
    IterationLimit { attempts: u64, acceptance_rate: f64 },

    #[error("vertex ({x}, {y}) is outside the window [{x_min}, {x_max}]")]
    OutOfWindow { x: i64, y: u8, x_min: i64, x_max: i64 },

    #[error("start vertex ({x}, {y}) is not on the open cluster")]
    NotOnCluster { x: i64, y: u8 },

    #[error("transition ({from_x}, {from_y}) -> ({to_x}, {to_y}) has zero probability")]
    ZeroProbability { from_x: i64, from_y: u8, to_x: i64, to_y: u8 },

    #[error("insufficient sample: need at least {needed}, got {got}")]
    InsufficientSample { needed: usize, got: usize },

    #[error("source and targets are not connected in the network")]
    Disconnected,

    #[error("internal numerical failure: {0}")]
    Internal(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LadderError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(LadderError::Domain(msg.into()))
}
