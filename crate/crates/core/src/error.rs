use std::path::PathBuf;

use thiserror::Error;

use crate::selector::SelectorMode;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation at `{field}`: {reason}")]
    SchemaViolation { field: String, reason: String },
    #[error("duplicate video_id `{0}`")]
    DuplicateVideoId(String),
    #[error("bad magic {found:?} (expected {expected:?})")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    TruncatedFile { expected: u64, actual: u64 },
    #[error("corrupt data: {0}")]
    CorruptFile(String),
    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("alpha {0} outside [0, 1]")]
    AlphaOutOfRange(f64),

    #[error("{frames} frames cannot seed {k} clusters")]
    TooFewFrames { frames: usize, k: usize },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("empty training set")]
    EmptyDataset,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("selector is in {found} mode, operation requires {expected} mode")]
    WrongMode {
        expected: SelectorMode,
        found: SelectorMode,
    },
    #[error("generation-mode selection requires a query")]
    MissingQuery,
    #[error("frames must be given in ascending timestamp order")]
    UnsortedFrames,
    #[error("only {0} subsets available; labeling needs at least 6")]
    TooFewSubsets(usize),
    #[error("C({n}, {m}) exceeds the brute-force enumeration cap")]
    SpaceTooLarge { n: usize, m: usize },

    #[error("video `{0}` has no text embedding but alpha > 0")]
    MissingTextEmbedding(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("no ground truth for query `{0}`")]
    MissingTruth(String),

    #[error("retrieval returned no videos")]
    EmptyRetrieval,
    #[error("video `{0}` has neither subtitle nor transcript")]
    MissingTranscript(String),
    #[error("frame payload not found: {0}")]
    MissingFrame(PathBuf),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("generator returned HTTP {status}: {body}")]
    GeneratorError { status: u16, body: String },
    #[error("speech recognition failed: {0}")]
    AsrError(String),
    #[error("generator returned an empty answer")]
    EmptyAnswer,
    #[error("malformed JSON reply: {0}")]
    MalformedJson(String),
    #[error("expected 3 question-answer pairs, got {0}")]
    WrongCount(usize),
    #[error("no integer score in reply {0:?}")]
    UnparseableScore(String),
    #[error("score {0} outside 1..=5")]
    ScoreOutOfRange(i64),
    #[error("service response violates contract: {0}")]
    InvalidResponse(String),

    #[error("config `{field}`: {reason}")]
    Config { field: String, reason: String },
    #[error("video `{video_id}`: {source}")]
    Video {
        video_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::SchemaViolation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn for_video(self, video_id: &str) -> Self {
        Error::Video {
            video_id: video_id.to_string(),
            source: Box::new(self),
        }
    }

    /// Process exit code: 1 validation, 2 transport, 3 data corruption.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Video { source, .. } => source.exit_code(),
            Error::Transport(_)
            | Error::GeneratorError { .. }
            | Error::AsrError(_)
            | Error::InvalidResponse(_) => 2,
            Error::SchemaViolation { .. }
            | Error::DuplicateVideoId(_)
            | Error::BadMagic { .. }
            | Error::UnsupportedVersion(_)
            | Error::TruncatedFile { .. }
            | Error::CorruptFile(_)
            | Error::NonFiniteValue { .. } => 3,
            _ => 1,
        }
    }
}
