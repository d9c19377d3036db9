use thiserror::Error;

/// Errors raised by the discrete control library.
#[derive(Debug, Error)]
pub enum Error {
    /// Array lengths or grid shapes do not agree.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Invalid construction parameters (grid size, materials, problem data).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Conjugate gradients hit the iteration cap before reaching the tolerance.
    #[error("conjugate gradient did not converge in {iters} iterations (relative residual {residual:.3e})")]
    NotConverged { iters: usize, residual: f64 },

    /// Non-positive curvature met during conjugate gradients.
    #[error("operator is not positive definite: curvature {curvature:.3e} at iteration {iter}")]
    Indefinite { iter: usize, curvature: f64 },

    /// A pivot of a direct factorization was not positive.
    #[error("factorization failed at row {row} (pivot {pivot:.3e})")]
    Factorization { row: usize, pivot: f64 },

    /// The requested operation is not available for this configuration.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Shape(format!("{what}: length {got}, expected {expected}")));
    }
    Ok(())
}
