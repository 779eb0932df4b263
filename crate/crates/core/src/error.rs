use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {message}")]
    Malformed { what: String, message: String },

    #[error("tensor {name}: shape mismatch, expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("missing tensor {0}")]
    MissingTensor(String),

    #[error("tensor {name}: non-finite value at flat index {index}")]
    NonFinite { name: String, index: usize },

    #[error("sequence length {len} outside 1..={max}")]
    SequenceLength { len: usize, max: usize },

    #[error("token id {id} at position {position} is out of range for vocab size {vocab}")]
    TokenOutOfRange {
        id: usize,
        position: usize,
        vocab: usize,
    },

    #[error("{what} index {index} out of range (limit {limit})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },

    #[error("non-finite input: {0}")]
    NonFiniteInput(&'static str),

    #[error("context indices {indices:?} are assigned to more than one source")]
    SpanOverlap { indices: Vec<usize> },

    #[error("context indices {indices:?} are not assigned to any source")]
    SpanUncovered { indices: Vec<usize> },

    #[error("context indices {indices:?} lie outside the visible context of row {row}")]
    SpanOutOfRange { row: usize, indices: Vec<usize> },

    #[error("attention row of head {head} has zero total mass")]
    EmptyAttentionRow { head: usize },

    #[error("length mismatch: {left} {what} vs {right}")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("offset {offset} exceeds text length {len}")]
    OffsetOutOfBounds { offset: usize, len: usize },

    #[error("word {index} is malformed or overlaps its predecessor")]
    BadWord { index: usize },

    #[error("cannot tokenize {0:?} with the toy vocabulary")]
    Untokenizable(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(what: impl Into<String>, message: impl ToString) -> Self {
        Error::Malformed {
            what: what.into(),
            message: message.to_string(),
        }
    }

    /// Short machine-readable category, used for structured CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::Io { .. } => "io",
            Error::Malformed { .. } => "malformed",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::MissingTensor(_) => "missing_tensor",
            Error::NonFinite { .. } => "non_finite",
            Error::SequenceLength { .. } => "sequence_length",
            Error::TokenOutOfRange { .. } => "token_out_of_range",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::NonFiniteInput(_) => "non_finite_input",
            Error::SpanOverlap { .. } => "span_overlap",
            Error::SpanUncovered { .. } => "span_uncovered",
            Error::SpanOutOfRange { .. } => "span_out_of_range",
            Error::EmptyAttentionRow { .. } => "empty_attention_row",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::EmptyInput(_) => "empty_input",
            Error::OffsetOutOfBounds { .. } => "offset_out_of_bounds",
            Error::BadWord { .. } => "bad_word",
            Error::Untokenizable(_) => "untokenizable",
        }
    }
}
