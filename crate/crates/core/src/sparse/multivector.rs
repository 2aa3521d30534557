use crate::error::{check_dim, Error, Result};
use crate::sparse::{SparseMatrix, SpmmStats};

/// `n_blocks` vectors of length `block_len`, stored column after column.
///
/// Column `j` occupies flat indices `[j * block_len, (j + 1) * block_len)`,
/// so a flat vector of length `block_len * n_blocks` reshapes into a
/// `MultiVector` without moving any data.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiVector {
    block_len: usize,
    n_blocks: usize,
    data: Vec<f64>,
}

impl MultiVector {
    pub fn zeros(block_len: usize, n_blocks: usize) -> Self {
        Self {
            block_len,
            n_blocks,
            data: vec![0.0; block_len * n_blocks],
        }
    }

    /// Reshapes a flat vector into `n_blocks` equal columns.
    pub fn from_flat(data: Vec<f64>, n_blocks: usize) -> Result<Self> {
        if n_blocks == 0 || data.len() % n_blocks != 0 {
            return Err(Error::InvalidArgument(format!(
                "length {} is not divisible into {} blocks",
                data.len(),
                n_blocks
            )));
        }
        Ok(Self {
            block_len: data.len() / n_blocks,
            n_blocks,
            data,
        })
    }

    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let block_len = columns.first().map_or(0, |c| c.len());
        let mut data = Vec::with_capacity(block_len * columns.len());
        for c in columns {
            check_dim("from_columns", block_len, c.len())?;
            data.extend_from_slice(c);
        }
        Ok(Self {
            block_len,
            n_blocks: columns.len(),
            data,
        })
    }

    pub fn block_len(&self) -> usize {
        self.block_len
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_flat(self) -> Vec<f64> {
        self.data
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.block_len..(j + 1) * self.block_len]
    }

    pub fn column_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.block_len..(j + 1) * self.block_len]
    }
}

impl SparseMatrix {
    /// Applies the matrix to every column of `x` in a single pass over its rows.
    pub fn spmm(&self, x: &MultiVector) -> Result<MultiVector> {
        Ok(self.spmm_with_stats(x)?.0)
    }

    /// Like [`SparseMatrix::spmm`], also returning the value-load counters.
    pub fn spmm_with_stats(&self, x: &MultiVector) -> Result<(MultiVector, SpmmStats)> {
        check_dim("spmm", self.n_cols(), x.block_len())?;
        let mut y = MultiVector::zeros(self.n_rows(), x.n_blocks());
        let stats = self.spmm_into(x.as_flat(), x.n_blocks(), y.as_flat_mut());
        Ok((y, stats))
    }
}
