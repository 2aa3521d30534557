use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid sparse structure: {0}")]
    InvalidStructure(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid of {nx}x{ny}x{nz} cells cannot be split into {parts} mirrored parts")]
    IndivisibleGrid {
        nx: usize,
        ny: usize,
        nz: usize,
        parts: usize,
    },

    #[error("local system of row {row} is not positive definite")]
    NotPositiveDefinite { row: usize },

    #[error("fine node {node} has no coarse point reachable for interpolation")]
    NoInterpolationSource { node: usize },

    #[error("CG breakdown at iteration {iteration}: p^T A p = {curvature:e}")]
    Breakdown { iteration: usize, curvature: f64 },

    #[error("preconditioner `{0}` is nonsymmetric and cannot be used with CG")]
    NonsymmetricPreconditioner(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(op: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { op, expected, got })
    }
}
