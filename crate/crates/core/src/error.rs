use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported quadrature degree {degree} (supported: 1..={max})")]
    UnsupportedDegree { degree: usize, max: usize },

    #[error("malformed mesh: {0}")]
    MalformedMesh(String),

    #[error("non-manifold edge ({0}, {1}) shared by more than two triangles")]
    NonManifoldEdge(usize, usize),

    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("negative argument t = {0} for an N-function")]
    NegativeArgument(f64),

    #[error("singular Jacobian limit at Q = 0 (delta + shift = 0, p = {p})")]
    SingularLaw { p: f64 },

    #[error("radial inversion did not converge for |target| = {target} after {iterations} iterations")]
    InversionFailed { target: f64, iterations: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("operation not defined: {0}")]
    Unsupported(String),

    #[error("sparse factorization failed: {0}")]
    Factorization(String),

    #[error("Newton stagnated: damping exhausted at iteration {iteration}, residual {residual:e}\n{trace}")]
    NewtonStagnation {
        iteration: usize,
        residual: f64,
        trace: String,
    },

    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NewtonMaxIterations { iterations: usize, residual: f64 },

    #[error("shift fixed-point did not converge in {iterations} iterations (last change {change:e})")]
    ShiftNotConverged { iterations: usize, change: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
