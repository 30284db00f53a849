use thiserror::Error;

#[derive(Error, Debug)]
pub enum LdError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("sampler error: {0}")]
    Sampler(String),

    #[error(transparent)]
    Autodiff(#[from] autodiff::Error),

    #[error(transparent)]
    Fae(#[from] fae::FaeError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LdError>;
