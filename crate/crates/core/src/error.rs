use thiserror::Error;

/// Errors raised by the estimation stack.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("integrand is not finite at x = {x}")]
    NonFiniteIntegrand { x: f64 },
    #[error("quadrature did not converge and the fallback disagrees (adaptive {adaptive}, fallback {fallback})")]
    QuadratureDisagreement { adaptive: f64, fallback: f64 },
    #[error("matrix is singular (|det| = {0:e})")]
    Singular(f64),
    #[error("optimizer failed: {0}")]
    Optimizer(String),
    #[error("unsupported combination: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
