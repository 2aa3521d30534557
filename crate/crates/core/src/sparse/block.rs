use crate::error::{check_dim, Result};
use crate::sparse::{SparseMatrix, SpmmStats};

/// Operator split as `I_{n_blocks} ⊗ inner + outer`.
///
/// `inner` acts on one block of unknowns; `outer` is a full-size matrix holding
/// the remaining (cross-block) couplings. Applying it fuses an SpMM by `inner`
/// over all blocks with an SpMV by `outer`.
#[derive(Debug, Clone)]
pub struct BlockOperator {
    n_blocks: usize,
    inner: SparseMatrix,
    outer: SparseMatrix,
}

impl BlockOperator {
    pub fn new(n_blocks: usize, inner: SparseMatrix, outer: SparseMatrix) -> Result<Self> {
        check_dim("block operator rows", inner.n_rows() * n_blocks, outer.n_rows())?;
        check_dim("block operator cols", inner.n_cols() * n_blocks, outer.n_cols())?;
        Ok(Self {
            n_blocks,
            inner,
            outer,
        })
    }

    /// Splits a full matrix given the inner block: `outer = full - I ⊗ inner`,
    /// keeping only positions where the difference is nonzero or structurally
    /// outside `I ⊗ inner`.
    pub fn from_full(full: &SparseMatrix, inner: SparseMatrix, n_blocks: usize) -> Result<Self> {
        let replicated = inner.kron_identity(n_blocks);
        let diff = full.add_scaled(-1.0, &replicated)?;
        let outer = diff.filter(|i, j, v| v != 0.0 || !replicated.has_entry(i, j));
        Self::new(n_blocks, inner, outer)
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn inner(&self) -> &SparseMatrix {
        &self.inner
    }

    pub fn outer(&self) -> &SparseMatrix {
        &self.outer
    }

    pub fn block_len(&self) -> usize {
        self.inner.n_rows()
    }

    pub fn n_rows(&self) -> usize {
        self.outer.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.outer.n_cols()
    }

    /// Builds `I ⊗ inner + outer` explicitly.
    pub fn materialize(&self) -> SparseMatrix {
        self.inner
            .kron_identity(self.n_blocks)
            .add_scaled(1.0, &self.outer)
            .expect("conforming by construction")
    }

    /// True when `outer` stores nothing on the structural pattern of `I ⊗ inner`.
    pub fn is_disjoint(&self) -> bool {
        let bl = self.inner.n_rows();
        let bc = self.inner.n_cols();
        (0..self.outer.n_rows()).all(|i| {
            let (b, li) = (i / bl, i % bl);
            self.outer
                .row(i)
                .0
                .iter()
                .all(|&j| j / bc != b || !self.inner.has_entry(li, j % bc))
        })
    }

    /// y = (I ⊗ inner) x + outer x.
    pub fn fused_block_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("fused_block_apply", self.n_cols(), x.len())?;
        let mut y = vec![0.0; self.n_rows()];
        self.apply_into(x, &mut y);
        Ok(y)
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) -> SpmmStats {
        let stats = self.inner.spmm_into(x, self.n_blocks, y);
        if self.outer.nnz() > 0 {
            self.outer.spmv_add(1.0, x, y);
        }
        stats
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        SparseMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn identity_blocks() {
        let op = BlockOperator::new(2, SparseMatrix::identity(2), SparseMatrix::zeros(4, 4)).unwrap();
        assert_eq!(
            op.fused_block_apply(&[1.0, 2.0, 3.0, 4.0]).unwrap(),
            vec![1.0, 2.0, 3.0, 4.0]
        );
    }

    #[test]
    fn hand_evaluated_outer_coupling() {
        let outer = SparseMatrix::from_triplets(4, 4, &[(1, 2, -1.0), (2, 1, -1.0)]).unwrap();
        let op = BlockOperator::new(2, SparseMatrix::identity(2), outer).unwrap();
        assert_eq!(
            op.fused_block_apply(&[1.0, 2.0, 3.0, 4.0]).unwrap(),
            vec![1.0, -1.0, 1.0, 4.0]
        );
        assert!(op.is_disjoint());
    }

    #[test]
    fn fused_matches_materialized() {
        let inner = laplacian_1d(32);
        let outer = SparseMatrix::from_triplets(
            128,
            128,
            &[(31, 32, -1.0), (32, 31, -1.0), (63, 64, -0.5), (64, 63, -0.5), (0, 127, 0.25)],
        )
        .unwrap();
        let op = BlockOperator::new(4, inner, outer).unwrap();
        let x: Vec<f64> = (0..128).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let y = op.fused_block_apply(&x).unwrap();
        let y_ref = op.materialize().spmv(&x).unwrap();
        let norm = y_ref.iter().map(|v| v * v).sum::<f64>().sqrt();
        let err = y.iter().zip(&y_ref).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 1e-13 * norm);
    }

    #[test]
    fn from_full_recovers_split() {
        let inner = laplacian_1d(3);
        let full = laplacian_1d(6);
        let op = BlockOperator::from_full(&full, inner, 2).unwrap();
        assert_eq!(op.outer().nnz(), 2);
        assert_eq!(op.materialize(), full);
        assert!(op.is_disjoint());
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(BlockOperator::new(2, SparseMatrix::identity(2), SparseMatrix::zeros(3, 3)).is_err());
        let op = BlockOperator::new(2, SparseMatrix::identity(2), SparseMatrix::zeros(4, 4)).unwrap();
        assert!(op.fused_block_apply(&[1.0; 3]).is_err());
    }
}
