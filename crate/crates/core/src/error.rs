use thiserror::Error;

/// Errors produced by the decomposition library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("spectrum is not conjugate-symmetric along the band axis (deviation {deviation:e})")]
    SymmetryViolation { deviation: f64 },

    #[error("singular value decomposition did not converge ({rows}x{cols})")]
    SvdFailure { rows: usize, cols: usize },

    #[error("malformed label map: {0}")]
    MalformedLabels(String),

    #[error("spectral covariance is identically zero")]
    ZeroCovariance,

    #[error("non-finite value produced at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("class {class} has no training samples")]
    EmptyClass { class: usize },

    #[error("reference cube has zero norm")]
    ZeroReference,

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
