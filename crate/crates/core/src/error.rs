use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },

    #[error("empty-domain: no interactions survive filtering{}", context_suffix(.context))]
    EmptyDomain { context: String },

    #[error("incomplete-features: missing ids {missing:?} in {path} (regenerate it with the feature extractor)")]
    IncompleteFeatures { path: String, missing: Vec<usize> },

    #[error("invalid-feature: non-finite value for id {id} in {path}")]
    InvalidFeature { path: String, id: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("population mismatch: {0}")]
    Population(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("overlap batch needs at least 2 users, got {0}")]
    BatchTooSmall(usize),

    #[error("non-finite loss: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: {dump}")]
    Divergence {
        epoch: usize,
        batch: usize,
        dump: String,
    },

    #[error("version error: {0}")]
    Version(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("no evaluable users in domain {0}")]
    NoEvaluableUsers(String),

    #[error("unknown user key {key:?}; nearest known keys: {suggestions:?}")]
    UnknownUser { key: String, suggestions: Vec<String> },

    #[error("cold user: {0}")]
    ColdUser(String),
}

fn context_suffix(ctx: &str) -> String {
    if ctx.is_empty() {
        String::new()
    } else {
        format!(" ({ctx})")
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Version(_) | Error::UnknownUser { .. } => 2,
            Error::Divergence { .. } => 4,
            _ => 3,
        }
    }
}
