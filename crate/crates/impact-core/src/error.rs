use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a domain precondition (negative participation,
    /// non-positive duration, and so on).
    #[error("domain error: {0}")]
    Domain(String),

    /// The input file header does not match the expected schema.
    #[error("schema error: {0}")]
    Schema(String),

    /// A data row failed validation. Row numbers are 1-based and count the
    /// header as row 1.
    #[error("row {row}, {column}: {message}")]
    Row {
        row: u64,
        column: &'static str,
        message: String,
    },

    /// Two bucket matrices built on different grids cannot be merged.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Not enough populated cells (or points) to run an estimator.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Adaptive quadrature could not meet its error target. Carries the
    /// best estimate and the achieved error bound.
    #[error("quadrature failed its error target: estimate {estimate}, error bound {error_bound}, target {target}")]
    Quadrature {
        estimate: f64,
        error_bound: f64,
        target: f64,
    },

    /// The optimizer exhausted its iteration budget. Carries the best
    /// parameters seen so far.
    #[error("fit did not converge within {iterations} iterations (best objective {objective})")]
    NonConvergence {
        iterations: usize,
        objective: f64,
        best: [f64; 3],
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
