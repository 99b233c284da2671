use thiserror::Error;

/// Errors raised anywhere in the library.
///
/// Variants fall into two families: validation failures (bad graphs, bad
/// parameters, malformed input files) and numerical failures (a
/// factorization or eigensolve that did not succeed). The CLI maps the first
/// family to exit code 2 and the second to exit code 3.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("edge list is empty")]
    EmptyGraph,
    #[error("edge {edge} has non-positive or non-finite length {length}")]
    NonPositiveLength { edge: u64, length: f64 },
    #[error("graph is disconnected: vertex {vertex} is unreachable from vertex {root}")]
    DisconnectedGraph { root: u64, vertex: u64 },
    #[error("duplicate edge id {0}")]
    DuplicateEdge(u64),
    #[error("unknown edge id {0}")]
    UnknownEdge(u64),
    #[error("unknown vertex id {0}")]
    UnknownVertex(u64),
    #[error("point t={t} lies outside edge {edge} of length {length}")]
    InvalidPoint { edge: u64, t: f64, length: f64 },
    #[error("{name} must be non-negative/positive at edge {edge}, t={t}: got {value}")]
    NonPositiveCoefficient {
        name: &'static str,
        edge: u64,
        t: f64,
        value: f64,
    },
    #[error("meshes are defined over different graphs")]
    MeshMismatch,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("problem size {size} exceeds the dense limit {limit}")]
    SizeLimit { size: usize, limit: usize },
    #[error("Cholesky factorization failed: pivot {pivot} is not positive ({value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    EigenConvergence { iterations: usize, residual: f64 },
    #[error("I/O error: {0}")]
    Io(String),
}

impl Error {
    /// True for failures of a numerical kernel rather than of the inputs.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. } | Error::EigenConvergence { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
