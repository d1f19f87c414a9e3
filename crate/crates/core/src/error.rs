use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{file}:{line}: field `{field}`: {message}")]
    Record {
        file: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("invalid corpus: {0}")]
    Corpus(String),

    #[error("line index out of range: word {word_id} in document {doc_id} references line {line_index} but the document has {num_lines} lines")]
    LineIndexOutOfRange {
        doc_id: String,
        word_id: u32,
        line_index: usize,
        num_lines: usize,
    },

    #[error("unknown word id {word_id} in document {doc_id}")]
    UnknownWord { doc_id: String, word_id: u32 },

    #[error("unknown document {0}")]
    UnknownDocument(String),

    #[error("cannot classify word {word_id} in document {doc_id}: no text and no stop-word flag")]
    Unclassifiable { doc_id: String, word_id: u32 },

    #[error("unembeddable token {0:?}")]
    Unembeddable(String),

    #[error("missing embedding for key {0:?}")]
    MissingEmbedding(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no content words")]
    NoContentWords,

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("fingerprint mismatch: index has {found}, configuration expects {expected}")]
    FingerprintMismatch { expected: String, found: String },

    #[error("document {doc_id} has no transcription for word {word_id}")]
    MissingTranscription { doc_id: String, word_id: u32 },

    #[error("vocabulary exhausted: {0}")]
    VocabularyExhausted(String),

    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
