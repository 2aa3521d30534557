pub mod amg;
pub mod amgr;
pub mod amgs;
mod dense;
pub mod eigen;
pub mod error;
pub mod fsai;
pub mod krylov;
pub mod lowrank;
pub mod problems;
pub mod sparse;
pub mod symmetry;
mod vecops;

pub use error::{Error, Result};
pub use sparse::{BlockOperator, MultiVector, SparseMatrix};
