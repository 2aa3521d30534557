//! Factored sparse approximate inverse with a static lower pattern.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::dense::spd_solve;
use crate::error::{check_dim, Error, Result};
use crate::krylov::{MultiApply, Preconditioner};
use crate::sparse::{spgemm, MultiVector, SparseMatrix};

/// Work done while building a factor. Used to show that a smoother built on
/// one block costs the same regardless of how many blocks it is applied to.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct FsaiSetupStats {
    pub rows_built: usize,
    /// Sum over rows of the squared local system size.
    pub local_entries: usize,
    pub stored_nnz: usize,
}

/// `G ≈ L⁻¹` with `diag(G A Gᵀ) = 1`; applying it computes `Gᵀ G r`.
#[derive(Debug, Clone)]
pub struct FsaiFactor {
    g: SparseMatrix,
    gt: SparseMatrix,
    pattern_power: usize,
    setup: FsaiSetupStats,
}

/// Lower triangle (diagonal included) of the structure of `a^power`.
fn lower_pattern(a: &SparseMatrix, power: usize) -> Result<SparseMatrix> {
    let structure = SparseMatrix::new(
        a.n_rows(),
        a.n_cols(),
        a.row_offsets().to_vec(),
        a.col_indices().to_vec(),
        vec![1.0; a.nnz()],
    )?;
    let mut p = structure.clone();
    for _ in 1..power {
        p = spgemm(&p, &structure)?;
    }
    let with_diag = p.add_scaled(1.0, &SparseMatrix::identity(a.n_rows()))?;
    Ok(with_diag.filter(|i, j, _| j <= i))
}

pub fn build_fsai(a: &SparseMatrix, pattern_power: usize) -> Result<FsaiFactor> {
    if !a.is_square() {
        return Err(Error::InvalidArgument("FSAI needs a square matrix".into()));
    }
    if pattern_power == 0 {
        return Err(Error::InvalidArgument("pattern_power must be at least 1".into()));
    }
    let n = a.n_rows();
    let pattern = lower_pattern(a, pattern_power)?;
    let local_entries = AtomicUsize::new(0);
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let cols = pattern.row(i).0.to_vec();
            let m = cols.len();
            local_entries.fetch_add(m * m, Ordering::Relaxed);
            let mut local = DMatrix::zeros(m, m);
            for (r, &gi) in cols.iter().enumerate() {
                let (ac, av) = a.row(gi);
                let mut p = 0;
                for (&j, &v) in ac.iter().zip(av) {
                    while p < m && cols[p] < j {
                        p += 1;
                    }
                    if p == m {
                        break;
                    }
                    if cols[p] == j {
                        local[(r, p)] = v;
                    }
                }
            }
            let mut rhs = DVector::zeros(m);
            rhs[m - 1] = 1.0;
            let g = spd_solve(local, &rhs).ok_or(Error::NotPositiveDefinite { row: i })?;
            let last = g[m - 1];
            if !(last > 0.0) || !last.is_finite() {
                return Err(Error::NotPositiveDefinite { row: i });
            }
            let scale = 1.0 / last.sqrt();
            Ok((cols, g.iter().map(|v| v * scale).collect()))
        })
        .collect::<Result<_>>()?;
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut cols = Vec::with_capacity(pattern.nnz());
    let mut vals = Vec::with_capacity(pattern.nnz());
    for (c, v) in rows {
        cols.extend(c);
        vals.extend(v);
        offsets.push(cols.len());
    }
    let g = SparseMatrix::new(n, n, offsets, cols, vals)?;
    let gt = g.transpose();
    let setup = FsaiSetupStats {
        rows_built: n,
        local_entries: local_entries.into_inner(),
        stored_nnz: g.nnz(),
    };
    Ok(FsaiFactor {
        g,
        gt,
        pattern_power,
        setup,
    })
}

impl FsaiFactor {
    pub fn g(&self) -> &SparseMatrix {
        &self.g
    }

    pub fn g_transpose(&self) -> &SparseMatrix {
        &self.gt
    }

    pub fn pattern_power(&self) -> usize {
        self.pattern_power
    }

    pub fn dim(&self) -> usize {
        self.g.n_rows()
    }

    pub fn setup_stats(&self) -> FsaiSetupStats {
        self.setup
    }

    /// `Gᵀ (G r)`.
    pub fn apply(&self, r: &[f64]) -> Result<Vec<f64>> {
        check_dim("apply_fsai", self.dim(), r.len())?;
        let mut z = vec![0.0; r.len()];
        self.apply_into(r, &mut z);
        Ok(z)
    }

    pub fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        let t = self.g.spmv(r).expect("conforming");
        self.gt.spmv_into(&t, z);
    }

    /// Column-wise `Gᵀ G`, computed with two SpMM passes.
    pub fn apply_multivector(&self, r: &MultiVector) -> Result<MultiVector> {
        check_dim("apply_fsai", self.dim(), r.block_len())?;
        let t = self.g.spmm(r)?;
        self.gt.spmm(&t)
    }

    /// Solves `Gᵀ y = b` by back substitution.
    pub fn solve_transpose(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_dim("solve_transpose", self.dim(), b.len())?;
        let n = b.len();
        let mut y = vec![0.0; n];
        for i in (0..n).rev() {
            let (cols, vals) = self.gt.row(i);
            let mut acc = b[i];
            let mut diag = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                if j == i {
                    diag = v;
                } else {
                    acc -= v * y[j];
                }
            }
            y[i] = acc / diag;
        }
        Ok(y)
    }

    /// Explicit `Gᵀ G`.
    pub fn to_matrix(&self) -> SparseMatrix {
        spgemm(&self.gt, &self.g).expect("conforming")
    }
}

impl MultiApply for FsaiFactor {
    fn dim(&self) -> usize {
        self.g.n_rows()
    }

    fn apply_multi(&self, x: &[f64], n_vecs: usize, y: &mut [f64]) {
        let mut t = vec![0.0; x.len()];
        self.g.spmm_into(x, n_vecs, &mut t);
        self.gt.spmm_into(&t, n_vecs, y);
    }
}

impl Preconditioner for FsaiFactor {
    fn dim(&self) -> usize {
        self.g.n_rows()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.apply_into(r, z);
    }

    fn name(&self) -> String {
        "FSAI".into()
    }
}

/// The same factor applied independently to each of `n_blocks` consecutive
/// blocks of a vector (`I ⊗ GᵀG`), through SpMM.
#[derive(Debug, Clone)]
pub struct BlockFsai {
    factor: FsaiFactor,
    n_blocks: usize,
}

impl BlockFsai {
    pub fn new(factor: FsaiFactor, n_blocks: usize) -> Self {
        Self { factor, n_blocks }
    }

    pub fn factor(&self) -> &FsaiFactor {
        &self.factor
    }
}

impl Preconditioner for BlockFsai {
    fn dim(&self) -> usize {
        self.factor.dim() * self.n_blocks
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.factor.apply_multi(r, self.n_blocks, z);
    }

    fn name(&self) -> String {
        "FSAI".into()
    }
}
