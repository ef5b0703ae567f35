use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("singular {what}; collinear or constant columns: {}", columns.join(", "))]
    Singular { what: &'static str, columns: Vec<String> },
    #[error("objective is not finite: {0}")]
    NonFinite(String),
    #[error("complete or quasi-complete separation on column `{column}`")]
    Separation { column: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("fit did not converge after {iterations} iterations (gradient sup-norm {gradient_norm:e})")]
    NotConverged { iterations: usize, gradient_norm: f64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
