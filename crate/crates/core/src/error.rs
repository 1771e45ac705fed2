use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("rank-deficient channel set (pivot {pivot:.3e} below relative threshold)")]
    RankDeficient { pivot: f64 },

    #[error("cannot quantize a zero vector")]
    ZeroVector,

    #[error("codebook bits {bits} out of range [{min}, {max}]")]
    BitsOutOfRange { bits: u32, min: u32, max: u32 },

    #[error("approximate model undefined: {0}")]
    Domain(String),

    #[error("empty feasible range: {0}")]
    EmptyRange(String),

    #[error("no users to schedule")]
    NoUsers,

    #[error("invalid config `{field}`: {message}")]
    Config { field: &'static str, message: String },

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    pub fn config(field: &'static str, message: impl Into<String>) -> Self {
        Error::Config {
            field,
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
