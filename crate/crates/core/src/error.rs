use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported query radius {0} (maximum supported is 1.5)")]
    UnsupportedRadius(f64),

    #[error("event at t={event_t} arrived before configuration time t={now}")]
    OutOfOrderEvent { event_t: f64, now: f64 },

    #[error("invalid initial condition: {0}")]
    InvalidInitialCondition(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
