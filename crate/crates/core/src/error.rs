use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Two objects that must live on the same point space do not.
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Indices, windows or shapes are inconsistent.
    #[error("structural error: {0}")]
    Structural(String),

    /// An iterative solve did not meet its stopping rule.
    #[error("no convergence at index {}: {} steps, last gap {:e}", .0.index, .0.steps, .0.last_gap)]
    Convergence(Box<ConvergenceFailure>),

    /// A sampled hypothesis check found a counterexample.
    #[error("certification failed for {axiom}: {detail}")]
    Certification { axiom: &'static str, detail: String },
}

/// Diagnostics carried by [`Error::Convergence`].
#[derive(Debug, Clone)]
pub struct ConvergenceFailure {
    pub index: i64,
    pub steps: usize,
    pub last_gap: f64,
    /// Successive-iterate gaps, one per step.
    pub gaps: Vec<f64>,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn structural(msg: impl Into<String>) -> Error {
    Error::Structural(msg.into())
}
