//! Sparse and dense kernels shared by the rest of the crate.

pub mod band;
pub mod dense;
pub mod givens;
pub mod mmio;
pub mod sparse;
pub mod svd;
pub mod vec;

pub use band::BandLU;
pub use dense::{lu_factor, lu_solve, DenseLU, DenseMatrix};
pub use givens::{givens, GivensRotation};
pub use mmio::{read_matrix_market, read_matrix_market_str, write_array};
pub use sparse::SparseMatrix;
pub use svd::smallest_singular_value;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("invalid matrix structure: {0}")]
    InvalidStructure(String),
    #[error("matrix is singular to working precision (pivot {index})")]
    Singular { index: usize },
    #[error("matrix market parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("size guard exceeded: {size} > {limit}")]
    SizeGuard { size: usize, limit: usize },
}
