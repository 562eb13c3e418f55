use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("mesh generation failed: {0}")]
    MeshGeneration(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("electrode placement failed: {0}")]
    Electrodes(String),

    #[error("linear system is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("linear solve did not converge: relative residual {residual:e} (condition estimate {condition:e})")]
    SolveFailed { residual: f64, condition: f64 },

    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("invalid configuration: {}", .problems.join("; "))]
    Config { problems: Vec<String> },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
