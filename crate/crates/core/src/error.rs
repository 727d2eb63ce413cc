use thiserror::Error;

/// Errors raised by model construction, simulation and diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SnlsError {
    /// Invalid or inconsistent configuration (unsupported domain, exponent
    /// outside the admissible window, closure incompatible with the measure).
    #[error("configuration error: {0}")]
    Config(String),
    /// An argument outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// Vector or matrix dimensions that do not match the model or level.
    #[error("shape error: expected {expected}, got {got} ({context})")]
    Shape { expected: usize, got: usize, context: &'static str },
    /// Non-finite values, failed eigendecompositions, step-size underflow.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Misuse of an API (empty ensembles and similar).
    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T, E = SnlsError> = std::result::Result<T, E>;
