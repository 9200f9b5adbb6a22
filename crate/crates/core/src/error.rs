use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the diffusion library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape {0:?}: every dimension must be at least 1")]
    InvalidShape(Vec<usize>),

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("timestep {t} out of range 1..={steps}")]
    Index { t: usize, steps: usize },

    #[error("non-finite values at timestep {t}: {context}")]
    Numeric { t: usize, context: String },

    #[error("value out of domain: {0}")]
    Domain(String),

    #[error("cannot decode image {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("corpus error: {0}")]
    Corpus(String),

    #[error("checkpoint format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
