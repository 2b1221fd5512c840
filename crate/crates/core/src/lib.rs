pub mod chebyshev;
pub mod cli;
pub mod companion;
pub mod error;
pub mod linalg;
pub mod precond;
pub mod problems;
pub mod report;
pub mod solver_exact;
pub mod solver_inexact;
pub mod verify;

#[cfg(test)]
mod test_util;

pub use error::{Error, Result};
