use std::path::PathBuf;

/// Errors surfaced by the library.
#[derive(Debug, thiserror::Error)]
pub enum StagError {
    #[error("pixel ({u}, {v}) outside {width}x{height} image")]
    PixelOutOfRange {
        u: i64,
        v: i64,
        width: usize,
        height: usize,
    },

    #[error("timestamp normalization needs at least 2 total frames, got {0}")]
    TooFewFrames(usize),

    #[error("timestamp {0} outside [0, 1]")]
    TimestampOutOfRange(f64),

    #[error("dimension mismatch in {context}: {lhs} vs {rhs}")]
    DimMismatch {
        context: &'static str,
        lhs: String,
        rhs: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("grid {grid_u}x{grid_v} exceeds frame size {width}x{height}")]
    GridTooLarge {
        grid_u: usize,
        grid_v: usize,
        width: usize,
        height: usize,
    },

    #[error("adjacent segments use different grids: {lhs} vs {rhs}")]
    GridMismatch { lhs: String, rhs: String },

    #[error("depth mask selects zero pixels")]
    EmptyDepthMask,

    #[error("non-finite loss at iteration {iter}: {snapshot}")]
    NonFiniteLoss { iter: usize, snapshot: String },

    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, StagError>;

impl StagError {
    pub fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        StagError::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
