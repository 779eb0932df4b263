use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("training set has a single class (label {label})")]
    SingleClass { label: u8 },
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("feature width {found} does not match model width {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("length mismatch: {left} scores vs {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("label {label} at row {row} is not 0 or 1")]
    BadLabel { row: usize, label: i64 },
    #[error("cannot build {k} stratified folds: {reason}")]
    InfeasibleFolds { k: usize, reason: String },
    #[error("test index {index} leaked into a training partition")]
    Leakage { index: usize },
    #[error("search grid axis `{0}` is empty")]
    EmptyGrid(&'static str),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed {what}: {message}")]
    Malformed { what: &'static str, message: String },
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::SingleClass { .. } => "single_class",
            Error::TooFewSamples { .. } => "too_few_samples",
            Error::NonFinite { .. } => "non_finite",
            Error::Dimension { .. } => "dimension",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::BadLabel { .. } => "bad_label",
            Error::InfeasibleFolds { .. } => "infeasible_folds",
            Error::Leakage { .. } => "leakage",
            Error::EmptyGrid(_) => "empty_grid",
            Error::Io { .. } => "io",
            Error::Malformed { .. } => "malformed",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(what: &'static str, message: impl Into<String>) -> Self {
        Error::Malformed {
            what,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
