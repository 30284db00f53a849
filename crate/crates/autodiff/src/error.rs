use thiserror::Error;

/// Errors surfaced by tensor ops, the tape, the optimizer, and checkpoint IO.
#[derive(Error, Debug)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("non-finite value produced by tape node {node} ({op})")]
    NonFinite { node: usize, op: &'static str },

    #[error("non-finite gradient for parameter `{0}`; step aborted")]
    NonFiniteGradient(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
