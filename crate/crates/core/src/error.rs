use thiserror::Error;

/// Errors produced by the recovery pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signal is not unit norm (norm = {norm})")]
    NotUnitNorm { norm: f64 },

    #[error("raw intensities are required but the measurement set holds only sign patterns")]
    MissingIntensities,

    #[error("low-pass data has a dead band; alternating minimization needs full-band intensities")]
    DeadBand,

    #[error("dense assembly limited to n <= {max}, got n = {n}")]
    TooLarge { n: usize, max: usize },

    #[error("operator maps the iterate to zero")]
    DegenerateOperator,

    #[error("least-squares step is singular: all masks vanish at indices {indices:?}")]
    SingularStep { indices: Vec<usize> },

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    /// True for failures caused by the numerics rather than the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateOperator | Error::SingularStep { .. } | Error::NotUnitNorm { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
