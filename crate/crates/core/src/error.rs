use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch on {axis}: expected {expected}, found {found}")]
    DimensionMismatch {
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("term index {index} outside 1..={limit}")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("no sign given for modulus argument {0}")]
    MissingSign(usize),

    #[error("invalid sign {0}: must be +1 or -1")]
    InvalidSign(i64),

    #[error("disturbance dimension must be positive")]
    EmptyDisturbance,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("parameter `{0}` is structurally unidentifiable (its regressor row is a combination of earlier rows)")]
    StructurallyUnidentifiable(String),

    #[error("stacked IV matrix has numeric rank {rank} < {cols}; the data are not informative enough (full-rank condition violated)")]
    RankDeficient { rank: usize, cols: usize },

    #[error("too few equations: {rows} rows for {cols} unknowns")]
    Underdetermined { rows: usize, cols: usize },

    #[error("channel {channel} has mean {mean}; an excitation offset is required to fix its sign")]
    ZeroMeanChannel { channel: usize, mean: f64 },

    #[error("predictor needs auxiliary measurements, experiment {0} has none")]
    MissingAux(usize),

    #[error("channel {0} is constant, fit is undefined")]
    ConstantChannel(usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
