use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("sequence has no frames or no feature dimensions")]
    EmptySequence,

    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("input is empty")]
    EmptyInput,

    #[error("matrix shape mismatch: expected {expected}x{expected}, got {got}x{got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("feature buffer holds {got} values, expected {rows}x{cols}")]
    BadBufferLength { rows: usize, cols: usize, got: usize },

    #[error("temporal normalizer must be positive")]
    ZeroLength,

    #[error("temporal normalizer {n_total} is smaller than node count {n}")]
    NormalizerTooSmall { n: usize, n_total: usize },

    #[error("need at least 2 nodes to build a nearest-neighbor graph, got {0}")]
    TooFewNodes(usize),

    #[error("need at least 2 frames to build a hierarchy, got {0}")]
    TooFewFrames(usize),

    #[error("requested {k} clusters, but the finest available partition has {max_available}")]
    KUnreachable { k: usize, max_available: usize },

    #[error("requested {k} clusters from {available} items")]
    KTooLarge { k: usize, available: usize },

    #[error("k must be at least 1")]
    ZeroK,

    #[error("length mismatch: {what} has {left} entries, {other} has {right}")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        other: &'static str,
        right: usize,
    },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("infeasible synthetic spec: {0}")]
    InfeasibleSpec(String),

    #[error("problem too large for exhaustive search: {0} > {1}")]
    TooLarge(usize, usize),

    #[error("{}: bad magic bytes, not a feature matrix file", path.display())]
    BadMagic { path: PathBuf },

    #[error("{}: truncated file ({detail})", path.display())]
    TruncatedFile { path: PathBuf, detail: String },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("video {video_id}: {source}")]
    Video {
        video_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for errors caused by bad or missing input rather than a bug or a
    /// failed write.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Video { source, .. } => source.is_input_error(),
            Error::InvalidPartition(_) | Error::InvalidHierarchy(_) => false,
            _ => true,
        }
    }

    /// Attaches the video a failure belongs to.
    pub fn in_video(self, video_id: &str) -> Self {
        match self {
            e @ Error::Video { .. } => e,
            e => Error::Video {
                video_id: video_id.to_string(),
                source: Box::new(e),
            },
        }
    }
}
