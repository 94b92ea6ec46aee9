use thiserror::Error;

use crate::solver::SolveReport;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A closed-form Hessian was requested on (or within the exclusion margin of)
    /// a coordinate hyperplane `{z_i = 0}`.
    #[error("degenerate direction: coordinates {indices:?} lie on a coordinate hyperplane")]
    DegenerateDirection { indices: Vec<usize> },

    #[error("singularity: {0}")]
    Singularity(String),

    #[error("node {index:?} is within {required} node(s) of the grid boundary")]
    BoundaryProximity { index: Vec<usize>, required: usize },

    #[error("invalid slice: {0}")]
    InvalidSlice(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("exponent search failed: {0}")]
    SearchFailure(String),

    #[error("solver diverged after {} steps (residual {:.3e})", .0.steps, .0.final_residual)]
    Divergence(Box<SolveReport>),

    #[error("ellipticity normalization requires lambda <= 1 <= Lambda, got lambda = {lambda}, Lambda = {cap_lambda}")]
    EllipticityNormalization { lambda: f64, cap_lambda: f64 },

    #[error("out of domain: {0}")]
    OutOfDomain(String),

    #[error("fit undefined: {0}")]
    FitUndefined(String),

    #[error("degenerate measurement: {0}")]
    DegenerateMeasurement(String),

    #[error("eigensolver did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
