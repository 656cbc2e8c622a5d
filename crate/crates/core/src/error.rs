use std::path::PathBuf;

/// Errors produced by the selection engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("JSON error in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("corrupt tensor header: {0}")]
    CorruptHeader(String),
    #[error("unsupported tensor format version {0}")]
    UnsupportedVersion(u8),
    #[error("unknown tensor dtype code {0}")]
    UnknownDType(u8),
    #[error("tensor payload length mismatch: expected {expected} bytes, found {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("session manifest not found at {0}")]
    MissingManifest(PathBuf),
    #[error("invalid session: {0}")]
    InvalidSession(String),
    #[error("duplicate label at image {image_id} ({row}, {col})")]
    DuplicateLabel { image_id: String, row: usize, col: usize },
    #[error("label out of bounds: {0}")]
    LabelOutOfBounds(String),
    #[error("round {round} is waiting for {remaining} human labels")]
    PendingLabels { round: u32, remaining: usize },
    #[error("no round is waiting for human labels")]
    NoOpenRound,
    #[error("unknown query {0}")]
    UnknownQuery(usize),
    #[error("query {0} is already answered")]
    AlreadyAnswered(usize),
    #[error("class {class_id} outside 0..{num_classes}")]
    ClassOutOfRange { class_id: usize, num_classes: usize },
    #[error("ground truth missing for image {0}; use the human oracle instead")]
    MissingGroundTruth(String),
    #[error("invalid superpixel map: {0}")]
    InvalidSuperpixels(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}
