use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("amplitude map is not strictly increasing on [0, {range}]")]
    NotInvertible { range: f64 },

    #[error("pilot regressor for antenna {antenna} is rank deficient")]
    RankDeficient { antenna: usize },

    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error("division by zero in {0}")]
    ZeroDivisor(&'static str),

    #[error("channel matrix is rank deficient")]
    RankDeficientChannel,

    #[error("config error: {0}")]
    Config(String),

    #[error("config key `{key}` out of bounds: {bound}")]
    OutOfBounds { key: String, bound: String },

    #[error("unknown variant `{0}`")]
    UnknownVariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
