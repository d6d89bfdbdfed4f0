use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("incomplete T3 directory: missing {0}")]
    IncompleteT3(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("label out of range: {label} > {num_classes}")]
    LabelOutOfRange { label: u16, num_classes: u16 },
    #[error("coherency invariant violated: {0}")]
    InvalidCoherency(String),
    #[error("not a checkpoint")]
    NotACheckpoint,
    #[error("unsupported version {found} (max supported {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("palette/classes mismatch: palette has {palette} entries, need {needed}")]
    PaletteMismatch { palette: usize, needed: usize },
    #[error("center out of bounds: ({row}, {col}) in {height}x{width} image")]
    CenterOutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("empty class {0}")]
    EmptyClass(u16),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("bad reduction: {channels} channels not divisible by {reduction}")]
    BadReduction { channels: usize, reduction: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no training data")]
    NoTrainingData,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("unclassified prediction at ({row}, {col}) over a labeled reference pixel")]
    Unclassified { row: usize, col: usize },
    #[error("covariance not positive definite")]
    NotPositiveDefinite,
    #[error("scene too small: {height}x{width} for {classes} classes")]
    SceneTooSmall {
        height: usize,
        width: usize,
        classes: usize,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
