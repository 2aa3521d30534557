mod block;
mod csr;
pub mod mmio;
mod multivector;
mod product;

pub use block::BlockOperator;
pub use csr::{invert_permutation, SparseMatrix, SpmmStats};
pub use multivector::MultiVector;
pub use product::{spgemm, triple_product_rap};
