use std::path::PathBuf;

use chainsynth::corpus::CorpusError;
use chainsynth::dataset::{BuildError, MixError, RecordError};
use chainsynth::dedup::DedupConfigError;
use chainsynth::eval::EvalError;
use chainsynth_service::ServiceError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {msg}")]
    Config { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Records(#[from] RecordError),
    #[error(transparent)]
    Mix(#[from] MixError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dedup(#[from] DedupConfigError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error("replayed output differs from the manifest: {0}")]
    ReplayMismatch(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    /// 2 for usage and configuration mistakes, 1 for everything else.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            _ => 1,
        }
    }
}
