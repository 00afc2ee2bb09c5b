use thiserror::Error;

/// Errors surfaced by the numerical engine.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("multi-index order {order} exceeds supported bound {bound}")]
    OrderTooLarge { order: usize, bound: usize },

    #[error("integer overflow in {context}")]
    Overflow { context: &'static str },

    #[error("multi-index subtraction would go negative in component {component}")]
    NegativeIndex { component: usize },

    #[error("matrix is not symmetric positive definite: {context}")]
    NotPositiveDefinite { context: String },

    #[error("parameter out of bounds: {0}")]
    OutOfBounds(String),

    #[error("numerical integration failed to converge: {0}")]
    QuadratureFailure(String),

    #[error("optimizer failed to converge: {0}")]
    NonConvergence(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("csv error at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EngineError>;
