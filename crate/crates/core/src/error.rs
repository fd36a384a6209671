use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON at byte {byte_offset} (line {line}, column {column}): {message}")]
    Json {
        byte_offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("unsupported dataset version: `{path}` carries `is_impossible` (SQuAD v2.0)")]
    UnsupportedVersion { path: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("correlation is undefined for a constant series")]
    UndefinedCorrelation,

    #[error("length mismatch: {what} ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("vocabulary error: {0}")]
    Vocab(String),

    #[error("question has {tokens} tokens but max_length {max_length} leaves room for {room}")]
    QuestionTooLong {
        tokens: usize,
        max_length: usize,
        room: usize,
    },

    #[error("token span {start}..={end} is outside the context range {lo}..{hi}")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        lo: usize,
        hi: usize,
    },

    #[error("lexicon error at line {line}: {message}")]
    Lexicon { line: usize, message: String },

    #[error("weights file: bad magic {found:?}, expected \"QAW1\"")]
    BadMagic { found: [u8; 4] },

    #[error("weights file: header declares {expected} tensors but only {found} are complete")]
    BadTensorCount { expected: usize, found: usize },

    #[error("weights file truncated while reading {what}")]
    Truncated { what: String },

    #[error("tensor `{name}`: expected shape {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("tensor `{name}` is missing")]
    MissingTensor { name: String },

    #[error("unexpected tensor `{name}`")]
    UnexpectedTensor { name: String },

    #[error("tensor `{name}` contains a non-finite value at element {index}")]
    NonFinite { name: String, index: usize },

    #[error("model config: {0}")]
    Config(String),

    #[error("token id {id} at position {position} is outside the vocabulary of {vocab_size}")]
    TokenOutOfRange {
        id: u32,
        position: usize,
        vocab_size: usize,
    },

    #[error("sequence of {len} tokens exceeds max_positions {max_positions}")]
    SequenceTooLong { len: usize, max_positions: usize },

    #[error("logits file has no record for example `{0}`")]
    MissingLogits(String),

    #[error("logits file has more than one record for example `{0}`")]
    DuplicateLogits(String),

    #[error("encoding fingerprint mismatch for `{id}`: file has {found}, evaluator expects {expected}")]
    FingerprintMismatch {
        id: String,
        expected: String,
        found: String,
    },

    #[error("logits record line {line}: {message}")]
    LogitsRecord { line: usize, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Convert a serde_json error into [`Error::Json`] with an absolute byte offset into `input`.
    pub(crate) fn from_json(err: &serde_json::Error, input: &[u8]) -> Self {
        let line = err.line();
        let column = err.column();
        let line_start = if line <= 1 {
            0
        } else {
            input
                .iter()
                .enumerate()
                .filter(|(_, b)| **b == b'\n')
                .nth(line - 2)
                .map(|(i, _)| i + 1)
                .unwrap_or(input.len())
        };
        Error::Json {
            byte_offset: (line_start + column.saturating_sub(1)).min(input.len()),
            line,
            column,
            message: err.to_string(),
        }
    }
}
