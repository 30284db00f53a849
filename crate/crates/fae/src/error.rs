use thiserror::Error;

#[derive(Error, Debug)]
pub enum FaeError {
    #[error("{0}")]
    Invalid(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error(transparent)]
    Autodiff(#[from] autodiff::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FaeError>;
