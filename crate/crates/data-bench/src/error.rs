use thiserror::Error;

#[derive(Error, Debug)]
pub enum BenchError {
    #[error("{0}")]
    Invalid(String),

    #[error("CFL violation: nt = {nt_given} is unstable for this data; use nt >= {nt_suggested}")]
    Cfl { nt_given: usize, nt_suggested: usize },

    #[error(transparent)]
    Fae(#[from] fae::FaeError),
}

pub type Result<T> = std::result::Result<T, BenchError>;
