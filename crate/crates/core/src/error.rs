//! Error taxonomy shared by every module.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// The metric left the space of Kähler potentials: the smallest eigenvalue
    /// of `g = I + hess(phi)` dropped to or below the positivity floor.
    #[error("metric positivity lost: min eigenvalue {margin:.6e} <= floor {floor:.1e}{}",
        t.map(|t| format!(" at t={t:.8}")).unwrap_or_default())]
    Positivity {
        margin: f64,
        floor: f64,
        t: Option<f64>,
    },

    /// Adaptive stepping could not find an acceptable step above `dt_min`.
    #[error("step size floor reached at t={t:.8}: dt={dt:.3e} < dt_min={dt_min:.3e}")]
    StepFloor { dt: f64, dt_min: f64, t: f64 },

    /// An eigensolver ran out of iterations; `best` carries the last estimate.
    #[error("{what} did not converge after {iterations} iterations (best {best:.12e}, residual {residual:.3e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        best: f64,
        residual: f64,
    },

    /// The twisted Calabi energy increased across an accepted step.
    #[error("monotonicity violated at t={t:.8}: calabi {before:.16e} -> {after:.16e}")]
    Monotonicity { t: f64, before: f64, after: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite data in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Finite-difference stencil or path-quadrature failure, reported
    /// distinctly from data errors.
    #[error("stencil/path error: {0}")]
    Stencil(String),
}

pub type Result<T> = std::result::Result<T, Error>;
