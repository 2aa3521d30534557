//! Reflection change of basis and the decoupled subsystems it produces.

use std::f64::consts::FRAC_1_SQRT_2;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::krylov::{self, KrylovConfig, Preconditioner, SolveStats};
use crate::problems::{ProblemKind, SymmetricProblem};
use crate::sparse::SparseMatrix;
use crate::vecops::norm;

/// Relative threshold below which outer-coupling sums count as cancelled.
pub const CANCEL_TOL: f64 = 1e-14;

/// The orthogonal involution `P_s` acting on vectors made of `2^s` equal blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymmetryBasis {
    s: usize,
    n: usize,
}

impl SymmetryBasis {
    pub fn new(s: usize, n: usize) -> Result<Self> {
        if s >= usize::BITS as usize || n % (1usize << s) != 0 {
            return Err(Error::InvalidArgument(format!(
                "size {n} is not divisible into 2^{s} blocks"
            )));
        }
        Ok(Self { s, n })
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_blocks(&self) -> usize {
        1 << self.s
    }

    pub fn block_len(&self) -> usize {
        self.n >> self.s
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("apply_basis", self.n, x.len())?;
        let mut y = x.to_vec();
        self.apply_in_place(&mut y);
        Ok(y)
    }

    /// `s` butterfly sweeps; sweep `i` pairs entries `n / 2^i` apart.
    pub fn apply_in_place(&self, x: &mut [f64]) {
        assert_eq!(x.len(), self.n, "basis size");
        for sweep in 1..=self.s {
            let stride = self.n >> sweep;
            x.par_chunks_mut(2 * stride).for_each(|chunk| {
                let (lo, hi) = chunk.split_at_mut(stride);
                for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                    let (p, q) = (*a, *b);
                    *a = (p + q) * FRAC_1_SQRT_2;
                    *b = (p - q) * FRAC_1_SQRT_2;
                }
            });
        }
    }
}

pub fn apply_basis(basis: &SymmetryBasis, x: &[f64]) -> Result<Vec<f64>> {
    basis.apply(x)
}

/// Entry `(i, j)` of the unnormalized order-`2^s` Sylvester sign matrix.
pub fn sylvester_sign(i: usize, j: usize) -> f64 {
    if (i & j).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// The decoupled diagonal blocks of `P_s A P_s` with their common inner part.
#[derive(Debug, Clone)]
pub struct SubsystemSet {
    subsystems: Vec<SparseMatrix>,
    inner: SparseMatrix,
    outers: Vec<SparseMatrix>,
}

impl SubsystemSet {
    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn block_len(&self) -> usize {
        self.inner.n_rows()
    }

    pub fn subsystems(&self) -> &[SparseMatrix] {
        &self.subsystems
    }

    pub fn inner(&self) -> &SparseMatrix {
        &self.inner
    }

    pub fn outers(&self) -> &[SparseMatrix] {
        &self.outers
    }

    /// A subsystem whose rows sum to zero carries the constant null space.
    pub fn is_singular(&self, i: usize) -> bool {
        is_zero_row_sum(&self.subsystems[i])
    }
}

pub(crate) fn is_zero_row_sum(a: &SparseMatrix) -> bool {
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    a.row_sums().iter().all(|s| s.abs() <= 1e-12 * scale)
}

/// Forms `Â_i = Σ_j W[i,j] A_j` for the first block row `A_1..A_{2^s}`.
pub fn extract_subsystems(blocks: &[SparseMatrix]) -> Result<SubsystemSet> {
    let nb = blocks.len();
    if nb == 0 || !nb.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "need a power-of-two number of blocks, got {nb}"
        )));
    }
    let m = blocks[0].n_rows();
    for blk in blocks {
        if blk.n_rows() != m || blk.n_cols() != m {
            return Err(Error::DimensionMismatch {
                op: "extract_subsystems",
                expected: m,
                got: if blk.n_rows() != m { blk.n_rows() } else { blk.n_cols() },
            });
        }
    }
    let inner = blocks[0].clone();
    let scale = blocks.iter().map(SparseMatrix::max_abs).fold(0.0, f64::max);
    let outers: Vec<SparseMatrix> = (0..nb)
        .into_par_iter()
        .map(|i| {
            let mut acc = SparseMatrix::zeros(m, m);
            for (j, blk) in blocks.iter().enumerate().skip(1) {
                acc = acc.add_scaled(sylvester_sign(i, j), blk)?;
            }
            Ok(acc.filter(|_, _, v| v.abs() > CANCEL_TOL * scale))
        })
        .collect::<Result<_>>()?;
    let subsystems = outers
        .iter()
        .map(|out| inner.add_scaled(1.0, out))
        .collect::<Result<_>>()?;
    Ok(SubsystemSet {
        subsystems,
        inner,
        outers,
    })
}

/// `(A_inn, [A_out,i])`.
pub fn split_inner_outer(set: &SubsystemSet) -> (SparseMatrix, Vec<SparseMatrix>) {
    (set.inner.clone(), set.outers.clone())
}

#[derive(Debug, Clone)]
pub struct SymmetricSolveStats {
    pub subsystems: Vec<SolveStats>,
    /// `‖b − A x‖ / ‖b‖` recomputed on the original operator.
    pub relative_residual: f64,
    pub converged: bool,
    pub wall_time: f64,
}

impl SymmetricSolveStats {
    pub fn total_iterations(&self) -> usize {
        self.subsystems.iter().map(|s| s.iterations).sum()
    }

    pub fn max_iterations(&self) -> usize {
        self.subsystems.iter().map(|s| s.iterations).max().unwrap_or(0)
    }
}

/// Solves `A x = b` by transforming to the decoupled subsystems, solving each
/// one to relative tolerance `cfg.tolerance`, and transforming back. Since
/// `P_s` is orthogonal the global relative residual then obeys the same bound.
///
/// `make_precond(i, Â_i)` supplies the preconditioner for subsystem `i`.
/// Mean projection is applied only to subsystems with zero row sums.
pub fn symmetric_solve<F>(
    problem: &SymmetricProblem,
    b: &[f64],
    cfg: &KrylovConfig,
    make_precond: F,
) -> Result<(Vec<f64>, SymmetricSolveStats)>
where
    F: Fn(usize, &SparseMatrix) -> Result<Box<dyn Preconditioner>> + Sync,
{
    if let ProblemKind::Repeated { n_blocks } = problem.kind() {
        if n_blocks > 1 {
            return Err(Error::InvalidArgument(
                "repeated chains have no reflection basis".into(),
            ));
        }
    }
    check_dim("symmetric_solve", problem.n(), b.len())?;
    cfg.validate()?;
    let start = Instant::now();
    let set = extract_subsystems(problem.blocks())?;
    let basis = SymmetryBasis::new(problem.s(), problem.n())?;
    let mut rhs = b.to_vec();
    if cfg.nullspace_projection && is_zero_row_sum(problem.operator()) {
        krylov::project_nullspace_in_place(&mut rhs);
    }
    let mut bh = rhs.clone();
    basis.apply_in_place(&mut bh);
    let m = basis.block_len();
    let results: Vec<(Vec<f64>, SolveStats)> = (0..set.len())
        .into_par_iter()
        .map(|i| {
            let a = &set.subsystems[i];
            let precond = make_precond(i, a)?;
            let sub_cfg = KrylovConfig {
                nullspace_projection: cfg.nullspace_projection && set.is_singular(i),
                ..cfg.clone()
            };
            krylov::solve(a, precond.as_ref(), &bh[i * m..(i + 1) * m], &sub_cfg)
        })
        .collect::<Result<_>>()?;
    let mut x = Vec::with_capacity(problem.n());
    let mut subsystems = Vec::with_capacity(results.len());
    for (xi, st) in results {
        x.extend(xi);
        subsystems.push(st);
    }
    basis.apply_in_place(&mut x);
    let ax = problem.operator().spmv(&x)?;
    let r: Vec<f64> = rhs.iter().zip(&ax).map(|(p, q)| p - q).collect();
    let bnorm = norm(&rhs);
    let relative_residual = if bnorm > 0.0 { norm(&r) / bnorm } else { 0.0 };
    let converged = subsystems.iter().all(|s| s.converged);
    Ok((
        x,
        SymmetricSolveStats {
            subsystems,
            relative_residual,
            converged,
            wall_time: start.elapsed().as_secs_f64(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build_stretched_grid, make_symmetric_problem};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn butterfly_examples() {
        let b1 = SymmetryBasis::new(1, 4).unwrap();
        let y = b1.apply(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let r = FRAC_1_SQRT_2;
        let want = [4.0 * r, 6.0 * r, -2.0 * r, -2.0 * r];
        for (a, b) in y.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        let b2 = SymmetryBasis::new(2, 4).unwrap();
        let y = b2.apply(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        for v in y {
            assert!((v - 0.5).abs() < 1e-15);
        }
        assert!(SymmetryBasis::new(2, 6).is_err());
    }

    #[test]
    fn butterfly_matches_dense_sylvester() {
        let basis = SymmetryBasis::new(3, 8 * 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = basis.apply(&x).unwrap();
        let scale = 1.0 / 8f64.sqrt();
        for i in 0..8 {
            for l in 0..3 {
                let want: f64 = (0..8).map(|j| sylvester_sign(i, j) * x[j * 3 + l]).sum::<f64>() * scale;
                assert!((y[i * 3 + l] - want).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn two_block_example() {
        let a1 = SparseMatrix::from_dense(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        let a2 = SparseMatrix::from_dense(&[vec![0.0, 0.0], vec![0.0, -1.0]]).unwrap();
        let set = extract_subsystems(&[a1.clone(), a2]).unwrap();
        assert_eq!(set.subsystems()[0].to_dense(), vec![vec![2.0, -1.0], vec![-1.0, 1.0]]);
        assert_eq!(set.subsystems()[1].to_dense(), vec![vec![2.0, -1.0], vec![-1.0, 3.0]]);
        let (inn, outs) = split_inner_outer(&set);
        assert_eq!(inn, a1);
        assert_eq!(outs[0].to_dense(), vec![vec![0.0, 0.0], vec![0.0, -1.0]]);
        assert_eq!(outs[1].to_dense(), vec![vec![0.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn decoupled_blocks_give_identical_subsystems() {
        let a1 = SparseMatrix::from_dense(&[vec![3.0, -1.0], vec![-1.0, 3.0]]).unwrap();
        let z = SparseMatrix::zeros(2, 2);
        let set = extract_subsystems(&[a1.clone(), z.clone(), z.clone(), z]).unwrap();
        for (sub, out) in set.subsystems().iter().zip(set.outers()) {
            assert_eq!(sub.to_dense(), a1.to_dense());
            assert_eq!(out.nnz(), 0);
        }
    }

    #[test]
    fn rejects_mismatched_blocks() {
        let a = SparseMatrix::identity(2);
        let b = SparseMatrix::identity(3);
        assert!(extract_subsystems(&[a.clone(), b]).is_err());
        assert!(extract_subsystems(&[a.clone(), a.clone(), a]).is_err());
    }

    #[test]
    fn singular_subsystem_detection() {
        let grid = build_stretched_grid(4, 4, 2, [1.0; 3]).unwrap();
        let p = make_symmetric_problem(&grid, 2, ProblemKind::Mirrored).unwrap();
        let set = extract_subsystems(p.blocks()).unwrap();
        assert!(set.is_singular(0));
        assert!((1..4).all(|i| !set.is_singular(i)));
    }
}
