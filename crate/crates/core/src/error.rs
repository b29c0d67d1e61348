use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A basis label or parameter lies outside its allowed range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Probability mass cut off by the Fock truncation exceeds the tolerance.
    #[error("truncation leakage {leaked:.3e} exceeds tolerance {tolerance:.3e} ({context})")]
    Truncation {
        leaked: f64,
        tolerance: f64,
        context: String,
    },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    /// An input violated a documented precondition (e.g. non-Hermitian generator).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error(
        "integrator failed to converge after {steps} steps: last change {last_change:.3e} \
         (previous {previous_change:.3e}), tolerance {tolerance:.3e}"
    )]
    Convergence {
        steps: usize,
        last_change: f64,
        previous_change: f64,
        tolerance: f64,
    },

    #[error("integration error: {0}")]
    Integration(String),

    #[error("empty subspace: weight {0:.3e} inside the target subspace")]
    EmptySubspace(f64),

    #[error("degenerate state: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
