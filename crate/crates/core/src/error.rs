use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no word occurs at least {min_count} times")]
    EmptyVocabulary { min_count: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    RawIo(#[from] std::io::Error),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed embedding file: {0}")]
    Format(String),

    #[error("word {0:?} contains whitespace and cannot be written")]
    WhitespaceInWord(String),

    #[error("gradient bundles have different shapes: {0}")]
    ShapeMismatch(String),

    #[error("gradient is zero; the angle is undefined")]
    DegenerateGradient,

    #[error("rank correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("input lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("not enough in-vocabulary items to score ({found} found, {needed} needed)")]
    InsufficientCoverage { found: usize, needed: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
