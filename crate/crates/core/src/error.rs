use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("incompatible sketches: {0}")]
    IncompatibleSketch(String),

    #[error("time went backwards: now is {now}, got {requested}")]
    TimeRegression { now: u64, requested: u64 },

    #[error("query time {t_cur} is outside the current window {window_index} (Δ = {delta})")]
    StaleWindow {
        t_cur: u64,
        window_index: u64,
        delta: u64,
    },

    #[error("client {0:?} is not waiting")]
    NotWaiting(String),

    #[error("malformed snapshot: {0}")]
    Codec(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("report needs at least one record")]
    EmptyReport,

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// Stable snake_case name of the variant, used on the wire.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::IncompatibleSketch(_) => "incompatible_sketch",
            Error::TimeRegression { .. } => "time_regression",
            Error::StaleWindow { .. } => "stale_window",
            Error::NotWaiting(_) => "not_waiting",
            Error::Codec(_) => "codec",
            Error::Config(_) => "config",
            Error::EmptyReport => "empty_report",
            Error::Io(_) => "io",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
