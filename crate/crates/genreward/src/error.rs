//! Library-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value produced in {0}")]
    NonFinite(String),

    #[error("empty input to {0}")]
    EmptyInput(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("step on a finished episode")]
    EpisodeFinished,

    #[error("unknown task token {0:?}")]
    UnknownTask(String),

    #[error("parameters are frozen")]
    Frozen,

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("at step {t}: {source}")]
    AtStep {
        t: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("singular linear system in {0}")]
    Singular(&'static str),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn at_step(self, t: u64) -> Self {
        Error::AtStep {
            t,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
