use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    InvalidArgument(String),
    /// Parameter set that cannot describe a physical vehicle or contact.
    Config(String),
    IntegrationFailure { time: f64, reason: String },
    /// The front axle never touched the obstacle within the recorded series.
    NoCrossing,
    /// A metric window contained no samples.
    EmptyWindow,
    Underdetermined { points: usize, terms: usize },
    /// Every regressor row is identical, only the mean is identifiable.
    RankDeficient,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Config(msg) => write!(f, "configuration error: {msg}"),
            Error::IntegrationFailure { time, reason } => {
                write!(f, "integration failure at t = {time:.6} s: {reason}")
            }
            Error::NoCrossing => f.write_str("no front-wheel contact with the obstacle"),
            Error::EmptyWindow => f.write_str("metric window contains no samples"),
            Error::Underdetermined { points, terms } => {
                write!(f, "underdetermined fit: {points} points for {terms} terms")
            }
            Error::RankDeficient => f.write_str("all regressor rows are identical"),
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
