use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The stacked constraint matrix lost rank. `fix_scale` is set when freezing
    /// the scale at 1 (re-posing as a generalized absolute pose problem) would
    /// make the system solvable again.
    #[error("rank-deficient system: {reason}{}", if *.fix_scale { " (hint: retry with the scale fixed)" } else { "" })]
    RankDeficient { reason: String, fix_scale: bool },

    #[error("no solution: {0}")]
    NoSolution(String),

    #[error("integrity violation: {what} {id}")]
    Integrity { what: String, id: u64 },

    #[error("id collision: camera {0} exists in both inputs")]
    IdCollision(u64),

    #[error("not localizable: {0}")]
    NotLocalizable(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
