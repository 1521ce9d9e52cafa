use thiserror::Error;

/// Errors surfaced by the toolkit.
///
/// Programmer errors (dimension mismatches between arguments that the caller
/// controls) panic via `assert!`; this enum covers data-dependent failures.
#[derive(Debug, Error)]
pub enum Error {
    /// Input data violates a documented invariant (non-PSD covariance,
    /// out-of-range fraction, norm bound, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The cone-program solver could not factor its KKT system.
    #[error("numerical breakdown in solver: {0}")]
    NumericalBreakdown(String),

    /// The cone program was detected infeasible or unbounded.
    #[error("solver reported {status:?}: {detail}")]
    SolverFailed { status: crate::sdp::Status, detail: String },

    /// An iterative procedure ran out of its sweep budget.
    #[error("no convergence after {iterations} iterations: {detail}")]
    NoConvergence { iterations: usize, detail: String },

    /// A simulation step produced a non-finite quantity.
    #[error("non-finite value at step {step}: {detail}")]
    NonFinite { step: usize, detail: String },

    /// I/O or parse failure on dataset files.
    #[error("data error: {0}")]
    Data(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Data(e.to_string())
    }
}
