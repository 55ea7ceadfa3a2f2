use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty corpus: at least one instance is required")]
    EmptyCorpus,

    #[error("sentence {0} is not live in the graph")]
    NotLive(usize),

    #[error("unknown sentence id {0}")]
    UnknownSentence(usize),

    #[error("unknown n-gram id {0}")]
    UnknownNGram(usize),

    #[error("perplexity is undefined for an empty token sequence")]
    EmptySequence,

    #[error("invalid log-probability {value} at position {index}: must be finite and <= 0")]
    InvalidLogProb { index: usize, value: f64 },

    #[error("invalid value {value} for {what}: must be positive and finite")]
    NonPositive { what: &'static str, value: f64 },

    #[error("missing quality records for {count} instance(s), first id {first}")]
    MissingQuality { count: usize, first: usize },

    #[error("quality scores cover {got} instances but the graph has {expected}")]
    QualityMismatch { got: usize, expected: usize },

    #[error("instance count {n} exceeds the exhaustive-search cap {cap}")]
    OracleCap { n: usize, cap: usize },

    #[error("greedy cover of size {greedy} exceeds H({max_degree}) x {optimum}")]
    BoundViolated {
        greedy: usize,
        optimum: usize,
        max_degree: usize,
    },

    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse error classes, one per CLI exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Input,
    MissingQuality,
    Write,
    Internal,
}

impl ErrorCategory {
    pub fn exit_code(self) -> u8 {
        match self {
            ErrorCategory::Internal => 1,
            ErrorCategory::Config => 2,
            ErrorCategory::Input => 3,
            ErrorCategory::MissingQuality => 4,
            ErrorCategory::Write => 5,
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::OracleCap { .. } => ErrorCategory::Config,
            Error::Read { .. }
            | Error::Parse { .. }
            | Error::EmptyCorpus
            | Error::NonPositive { .. }
            | Error::InvalidLogProb { .. }
            | Error::EmptySequence => ErrorCategory::Input,
            Error::MissingQuality { .. } | Error::QualityMismatch { .. } => {
                ErrorCategory::MissingQuality
            }
            Error::Write { .. } => ErrorCategory::Write,
            Error::NotLive(_)
            | Error::UnknownSentence(_)
            | Error::UnknownNGram(_)
            | Error::BoundViolated { .. } => ErrorCategory::Internal,
        }
    }
}
