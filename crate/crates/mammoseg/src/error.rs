use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Pipeline stage, used to tag errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Read,
    Extract,
    Detect,
    Features,
    Train,
    Evaluate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Read => "read",
            Stage::Extract => "extract",
            Stage::Detect => "detect",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
        })
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("{stage} stage failed for `{id}`: {source}")]
    Stage {
        stage: Stage,
        id: String,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.to_path_buf(), source }
    }

    pub fn stage(stage: Stage, id: &str, source: impl std::error::Error + Send + Sync + 'static) -> Self {
        PipelineError::Stage { stage, id: id.to_string(), source: Box::new(source) }
    }

    pub fn stage_msg(stage: Stage, id: &str, message: impl Into<String>) -> Self {
        PipelineError::Stage { stage, id: id.to_string(), source: message.into().into() }
    }

    /// The stage an error came from, if any.
    pub fn stage_name(&self) -> Option<Stage> {
        match self {
            PipelineError::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
