use thiserror::Error;

#[derive(Error, Debug)]
pub enum TheoryError {
    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, TheoryError>;
