use thiserror::Error;

/// Errors surfaced by tape construction, optimization, and serialization.
#[derive(Debug, Error)]
pub enum NdiffError {
    /// An operation received arrays whose shapes do not chain.
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// A contract violation that is not a pure shape problem.
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    /// The optimizer saw a non-finite gradient.
    #[error("non-finite gradient for parameter `{param}`")]
    NonFiniteGradient { param: String },

    /// Checkpoint container I/O or format problems.
    #[error("checkpoint error at {path}: {detail}")]
    Checkpoint { path: String, detail: String },
}

pub type Result<T> = std::result::Result<T, NdiffError>;
