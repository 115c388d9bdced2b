use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("integration diverged at t = {t}: state magnitude exceeds 10 N")]
    StepTooLarge { t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("invalid rate function: {0}")]
    InvalidRate(String),

    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("sigma underflow: {value:e} < 1e-6 at t_s = {t_s}")]
    SigmaUnderflow { value: f64, t_s: f64 },

    #[error("time {t} outside window [{t0}, {tf}]")]
    OutOfWindow { t: f64, t0: f64, tf: f64 },
    #[error("negative mean {0} for count sampling")]
    NegativeMean(f64),
    #[error("wrong cadence: {0}")]
    WrongCadence(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("dates are not contiguous: {0}")]
    NonContiguousDates(String),
    #[error("negative count {value} in row {row}")]
    NegativeCount { row: usize, value: f64 },

    #[error("training diverged at epoch {epoch}: loss {loss:e}")]
    DivergedLoss { epoch: usize, loss: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("reference norm is zero")]
    ZeroReferenceNorm,
    #[error("empty evaluation window")]
    EmptyWindow,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by a failed optimization rather than bad input.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::DivergedLoss { .. }
                | Error::SigmaUnderflow { .. }
                | Error::StepTooLarge { .. }
                | Error::NonFiniteState { .. }
        )
    }
}
