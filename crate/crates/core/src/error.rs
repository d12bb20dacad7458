use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mode-count mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("mode {mode} out of range for a {modes}-mode state")]
    ModeOutOfRange { mode: usize, modes: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mode permutation is not a bijection on {0} modes")]
    NonBijective(usize),

    #[error("mode sets overlap or repeat: {0:?}")]
    OverlappingModes(Vec<usize>),

    #[error("unknown {kind} strategy `{name}` (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error("no sign change of the multiplexing trend in [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
