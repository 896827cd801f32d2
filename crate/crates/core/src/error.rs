use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },
    #[error("{rows}x{cols} matrix needs {} entries, got {len}", rows * cols)]
    Shape {
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("rows have inconsistent lengths: expected {expected}, found {found}")]
    Ragged { expected: usize, found: usize },
    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },
    #[error("matrix is not positive definite: pivot {pivot} has value {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix is numerically singular at pivot {pivot}")]
    Singular { pivot: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{atom} does not provide {capability}")]
    MissingCapability {
        atom: &'static str,
        capability: &'static str,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(
        "prox Newton iteration did not converge at coordinate {index} (residual {residual:e})"
    )]
    ProxNewton { index: usize, residual: f64 },
    #[error("{what} did not converge after {iters} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iters: usize,
        residual: f64,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("every step size in the grid diverged: {0:?}")]
    AllDiverged(Vec<f64>),
    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
