//! Low-rank corrected preconditioners for the decoupled subsystems
//! `Â_i = A_inn + A_out,i`.
//!
//! Both variants share one factor of `A_inn` across all subsystems and add a
//! per-subsystem correction built from a few eigenpairs of the preconditioned
//! subsystem operator.

use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::amg::{setup_amg, AmgConfig, AmgHierarchy};
use crate::dense::{general_eig, sym_eig_ascending, to_dmatrix};
use crate::eigen::{smallest_eigs_nonsym, smallest_eigs_sym, EigOptions};
use crate::error::{check_dim, Error, Result};
use crate::fsai::{build_fsai, FsaiFactor};
use crate::krylov::{FnOperator, MultiApply, Preconditioner};
use crate::sparse::SparseMatrix;
use crate::symmetry::{SubsystemSet, SymmetryBasis};
use crate::vecops::dot;

/// Eigenvalues below this magnitude are dropped (LRCAMG) or clamped (LRCFSAI).
pub const EIG_FLOOR: f64 = 1e-8;

fn basis_for(set: &SubsystemSet) -> Result<SymmetryBasis> {
    let s = set.len().trailing_zeros() as usize;
    SymmetryBasis::new(s, set.len() * set.block_len())
}

fn ones_normalized(m: usize) -> Vec<f64> {
    vec![1.0 / (m as f64).sqrt(); m]
}

/// `y += Σ_j coef_j(x) · cols_j` with `coef_j = theta_j · rowsᵀ_j x`.
fn add_low_rank(cols: &[Vec<f64>], theta: &[f64], rows: &[Vec<f64>], x: &[f64], y: &mut [f64]) {
    for ((c, &t), r) in cols.iter().zip(theta).zip(rows) {
        let a = t * dot(r, x);
        y.iter_mut().zip(c).for_each(|(yi, ci)| *yi += a * ci);
    }
}

/// Correction `Z Θ Zᵀ` for one subsystem.
#[derive(Debug, Clone, Default)]
pub struct FsaiCorrection {
    /// Eigenvalues `λ` of `G Â_i Gᵀ`, ascending.
    pub eigenvalues: Vec<f64>,
    /// `Z = Gᵀ V`.
    pub z: Vec<Vec<f64>>,
    /// `Θ = Σ(I − Σ)⁻¹ = (1 − λ)/λ`.
    pub theta: Vec<f64>,
    pub eig_converged: bool,
}

/// `P_s (I ⊗ GᵀG + blockdiag(Z_i Θ_i Z_iᵀ)) P_s`.
#[derive(Debug, Clone)]
pub struct LrcFsaiPrecond {
    factor: Arc<FsaiFactor>,
    corrections: Vec<Arc<FsaiCorrection>>,
    basis: SymmetryBasis,
    rank: usize,
}

/// `Θ = (1 − λ)/λ` with `λ` kept above [`EIG_FLOOR`].
pub fn fsai_theta(lambda: f64) -> f64 {
    let l = if lambda < EIG_FLOOR {
        warn!("eigenvalue {lambda:e} clamped to {EIG_FLOOR:e}");
        EIG_FLOOR
    } else {
        lambda
    };
    (1.0 - l) / l
}

pub fn build_lrcfsai(set: &SubsystemSet, k: usize, pattern_power: usize, eig: &EigOptions) -> Result<LrcFsaiPrecond> {
    let factor = Arc::new(build_fsai(set.inner(), pattern_power)?);
    let basis = basis_for(set)?;
    let m = set.block_len();
    let corrections = (0..set.len())
        .into_par_iter()
        .map(|i| {
            if k == 0 {
                return Ok(Arc::new(FsaiCorrection {
                    eig_converged: true,
                    ..Default::default()
                }));
            }
            let a = &set.subsystems()[i];
            let g = factor.g();
            let gt = factor.g_transpose();
            let x = FnOperator::new(m, |v: &[f64], y: &mut [f64]| {
                let t = gt.spmv(v).expect("conforming");
                let u = a.spmv(&t).expect("conforming");
                g.spmv_into(&u, y);
            });
            let mut opts = eig.clone();
            if set.is_singular(i) {
                opts.deflate.push(factor.solve_transpose(&vec![1.0; m])?);
            }
            let pairs = smallest_eigs_sym(&x, k, &opts)?;
            if !pairs.converged {
                warn!("eigen-solve of subsystem {i} did not reach tolerance");
            }
            let z = pairs
                .vectors
                .iter()
                .map(|v| gt.spmv(v))
                .collect::<Result<Vec<_>>>()?;
            let theta = pairs.values.iter().map(|&l| fsai_theta(l)).collect();
            Ok(Arc::new(FsaiCorrection {
                eigenvalues: pairs.values,
                z,
                theta,
                eig_converged: pairs.converged,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(LrcFsaiPrecond {
        factor,
        corrections,
        basis,
        rank: k,
    })
}

impl LrcFsaiPrecond {
    pub fn factor(&self) -> &FsaiFactor {
        &self.factor
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n_subsystems(&self) -> usize {
        self.corrections.len()
    }

    pub fn correction(&self, i: usize) -> &FsaiCorrection {
        &self.corrections[i]
    }

    pub fn eig_converged(&self) -> bool {
        self.corrections.iter().all(|c| c.eig_converged)
    }

    /// The preconditioner of subsystem `i` alone: `GᵀG + Z_i Θ_i Z_iᵀ`.
    pub fn subsystem(&self, i: usize) -> LrcFsaiBlock {
        LrcFsaiBlock {
            factor: Arc::clone(&self.factor),
            correction: Arc::clone(&self.corrections[i]),
        }
    }
}

impl Preconditioner for LrcFsaiPrecond {
    fn dim(&self) -> usize {
        self.basis.n()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let m = self.factor.dim();
        let mut rh = r.to_vec();
        self.basis.apply_in_place(&mut rh);
        self.factor.apply_multi(&rh, self.corrections.len(), z);
        z.par_chunks_mut(m)
            .zip(rh.par_chunks(m))
            .zip(&self.corrections)
            .for_each(|((zi, ri), c)| add_low_rank(&c.z, &c.theta, &c.z, ri, zi));
        self.basis.apply_in_place(z);
    }

    fn name(&self) -> String {
        format!("LRCFSAI({})", self.rank)
    }
}

#[derive(Debug, Clone)]
pub struct LrcFsaiBlock {
    factor: Arc<FsaiFactor>,
    correction: Arc<FsaiCorrection>,
}

impl Preconditioner for LrcFsaiBlock {
    fn dim(&self) -> usize {
        self.factor.dim()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.factor.apply_into(r, z);
        let c = &self.correction;
        add_low_rank(&c.z, &c.theta, &c.z, r, z);
    }

    fn name(&self) -> String {
        format!("LRCFSAI({})", self.correction.z.len())
    }
}

/// `P_s blockdiag(M_0, …, M_{2^s−1}) P_s` for arbitrary subsystem
/// preconditioners.
pub struct BlockDiagonalPreconditioner {
    basis: SymmetryBasis,
    blocks: Vec<Box<dyn Preconditioner>>,
    name: String,
}

impl BlockDiagonalPreconditioner {
    pub fn new(basis: SymmetryBasis, blocks: Vec<Box<dyn Preconditioner>>) -> Result<Self> {
        if blocks.len() != basis.n_blocks() {
            return Err(Error::DimensionMismatch {
                op: "block_diagonal_preconditioner",
                expected: basis.n_blocks(),
                got: blocks.len(),
            });
        }
        for b in &blocks {
            check_dim("block_diagonal_preconditioner", basis.block_len(), b.dim())?;
        }
        let name = blocks.first().map(|b| b.name()).unwrap_or_default();
        Ok(Self { basis, blocks, name })
    }

    /// Independent FSAI factors of every subsystem.
    pub fn fsai(set: &SubsystemSet, pattern_power: usize) -> Result<Self> {
        let blocks = set
            .subsystems()
            .par_iter()
            .map(|a| Ok(Box::new(build_fsai(a, pattern_power)?) as Box<dyn Preconditioner>))
            .collect::<Result<_>>()?;
        Self::new(basis_for(set)?, blocks)
    }
}

impl Preconditioner for BlockDiagonalPreconditioner {
    fn dim(&self) -> usize {
        self.basis.n()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let m = self.basis.block_len();
        let mut rh = r.to_vec();
        self.basis.apply_in_place(&mut rh);
        z.par_chunks_mut(m)
            .zip(rh.par_chunks(m))
            .zip(&self.blocks)
            .for_each(|((zi, ri), b)| b.apply(ri, zi));
        self.basis.apply_in_place(z);
    }

    fn is_symmetric(&self) -> bool {
        self.blocks.iter().all(|b| b.is_symmetric())
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}

/// Correction `U (Θ − I) Vᵀ` for one subsystem.
#[derive(Debug, Clone, Default)]
pub struct AmgCorrection {
    /// Eigenvalues `λ` of `M Â_i`.
    pub eigenvalues: Vec<f64>,
    pub right: Vec<Vec<f64>>,
    /// Left eigenvectors with `Vᵀ U = I`.
    pub left: Vec<Vec<f64>>,
    /// `Θ = Λ⁻¹`.
    pub theta: Vec<f64>,
    pub eig_converged: bool,
}

impl AmgCorrection {
    fn from_pairs(values: Vec<f64>, right: Vec<Vec<f64>>, left: Vec<Vec<f64>>, converged: bool) -> Self {
        let mut out = AmgCorrection {
            eig_converged: converged,
            ..Default::default()
        };
        for ((l, u), v) in values.into_iter().zip(right).zip(left) {
            if l.abs() < EIG_FLOOR {
                warn!("dropping eigenpair with |λ| = {:e}", l.abs());
                continue;
            }
            out.eigenvalues.push(l);
            out.theta.push(1.0 / l);
            out.right.push(u);
            out.left.push(v);
        }
        out
    }

    /// `z += U (Θ − I) Vᵀ z`.
    fn apply(&self, z: &mut [f64]) {
        let coefs: Vec<f64> = self
            .left
            .iter()
            .zip(&self.theta)
            .map(|(v, t)| (t - 1.0) * dot(v, z))
            .collect();
        for (u, a) in self.right.iter().zip(coefs) {
            z.iter_mut().zip(u).for_each(|(zi, ui)| *zi += a * ui);
        }
    }
}

/// `P_s (I + blockdiag(U_i (Θ_i − I) V_iᵀ)) (I ⊗ M) P_s`, where `M`
/// approximates `A_inn⁻¹`.
pub struct LrcAmgPrecond<M = AmgHierarchy> {
    inner: Arc<M>,
    corrections: Vec<Arc<AmgCorrection>>,
    basis: SymmetryBasis,
    rank: usize,
}

pub fn build_lrcamg(set: &SubsystemSet, k: usize, amg: &AmgConfig, eig: &EigOptions) -> Result<LrcAmgPrecond> {
    let h = setup_amg(set.inner(), amg)?;
    build_lrcamg_with(set, h, k, eig)
}

/// Same as [`build_lrcamg`] with a caller-supplied symmetric `M ≈ A_inn⁻¹`.
pub fn build_lrcamg_with<M: MultiApply>(set: &SubsystemSet, inner: M, k: usize, eig: &EigOptions) -> Result<LrcAmgPrecond<M>> {
    let m = set.block_len();
    check_dim("build_lrcamg", m, inner.dim())?;
    let basis = basis_for(set)?;
    let inner = Arc::new(inner);
    let corrections = (0..set.len())
        .into_par_iter()
        .map(|i| {
            if k == 0 {
                return Ok(Arc::new(AmgCorrection {
                    eig_converged: true,
                    ..Default::default()
                }));
            }
            let a = &set.subsystems()[i];
            let mi = inner.as_ref();
            let x = FnOperator::new(m, |v: &[f64], y: &mut [f64]| {
                let t = a.spmv(v).expect("conforming");
                mi.apply_multi(&t, 1, y);
            });
            let xt = FnOperator::new(m, |v: &[f64], y: &mut [f64]| {
                let mut t = vec![0.0; m];
                mi.apply_multi(v, 1, &mut t);
                a.spmv_into(&t, y);
            });
            let mut opts = eig.clone();
            if set.is_singular(i) {
                // Right vectors only matter modulo the null vector, and left
                // vectors of nonzero eigenvalues are orthogonal to it.
                opts.deflate.push(ones_normalized(m));
            }
            let pairs = smallest_eigs_nonsym(&x, &xt, k, &opts)?;
            if !pairs.converged {
                warn!("eigen-solve of subsystem {i} did not reach tolerance");
            }
            Ok(Arc::new(AmgCorrection::from_pairs(
                pairs.values,
                pairs.right,
                pairs.left,
                pairs.converged,
            )))
        })
        .collect::<Result<_>>()?;
    Ok(LrcAmgPrecond {
        inner,
        corrections,
        basis,
        rank: k,
    })
}

impl<M: MultiApply> LrcAmgPrecond<M> {
    pub fn inner(&self) -> &M {
        &self.inner
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn n_subsystems(&self) -> usize {
        self.corrections.len()
    }

    pub fn correction(&self, i: usize) -> &AmgCorrection {
        &self.corrections[i]
    }

    pub fn eig_converged(&self) -> bool {
        self.corrections.iter().all(|c| c.eig_converged)
    }

    pub fn subsystem(&self, i: usize) -> LrcAmgBlock<M> {
        LrcAmgBlock {
            inner: Arc::clone(&self.inner),
            correction: Arc::clone(&self.corrections[i]),
        }
    }
}

impl<M: MultiApply> Preconditioner for LrcAmgPrecond<M> {
    fn dim(&self) -> usize {
        self.basis.n()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let m = self.inner.dim();
        let mut rh = r.to_vec();
        self.basis.apply_in_place(&mut rh);
        self.inner.apply_multi(&rh, self.corrections.len(), z);
        z.par_chunks_mut(m)
            .zip(&self.corrections)
            .for_each(|(zi, c)| c.apply(zi));
        self.basis.apply_in_place(z);
    }

    fn is_symmetric(&self) -> bool {
        false
    }

    fn name(&self) -> String {
        format!("LRCAMG({})", self.rank)
    }
}

pub struct LrcAmgBlock<M = AmgHierarchy> {
    inner: Arc<M>,
    correction: Arc<AmgCorrection>,
}

impl<M: MultiApply> Preconditioner for LrcAmgBlock<M> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.inner.apply_multi(r, 1, z);
        self.correction.apply(z);
    }

    fn is_symmetric(&self) -> bool {
        false
    }

    fn name(&self) -> String {
        format!("LRCAMG({})", self.correction.right.len())
    }
}

/// Relative errors of the two correction identities for a pair `(A, B)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionCheck {
    /// `‖B⁻¹ + L⁻ᵀVΣ(I−Σ)⁻¹VᵀL⁻¹ − A⁻¹‖_F / ‖A⁻¹‖_F` with `B = LLᵀ`.
    pub symmetric_error: f64,
    /// `‖(I + U(Σ⁻¹ − VᵀU)⁻¹Vᵀ)B⁻¹ − A⁻¹‖_F / ‖A⁻¹‖_F`.
    pub nonsymmetric_error: f64,
    /// `‖L⁻ᵀVΣ(I−Σ)⁻¹VᵀL⁻¹‖_F`.
    pub correction_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremReport {
    pub n: usize,
    pub seed: u64,
    /// Independent random SPD `A`, `B`, all eigenpairs kept.
    pub full_rank: CorrectionCheck,
    /// `B = A + wwᵀ`, one eigenpair kept.
    pub rank_one: CorrectionCheck,
}

impl TheoremReport {
    pub fn passes(&self, full_tol: f64, rank_one_tol: f64) -> bool {
        self.full_rank.symmetric_error <= full_tol
            && self.full_rank.nonsymmetric_error <= full_tol
            && self.rank_one.symmetric_error <= rank_one_tol
            && self.rank_one.nonsymmetric_error <= rank_one_tol
    }
}

fn dense_check(a: &DMatrix<f64>, b: &DMatrix<f64>, rank: usize) -> Result<CorrectionCheck> {
    let n = a.nrows();
    let a_inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("A is singular".into()))?;
    let l = b
        .clone()
        .cholesky()
        .ok_or(Error::NotPositiveDefinite { row: 0 })?
        .l();
    let l_inv = l.clone().try_inverse().expect("triangular with positive diagonal");
    let b_inv = l_inv.transpose() * &l_inv;
    let a_norm = a_inv.norm();

    let y = DMatrix::identity(n, n) - &l_inv * a * l_inv.transpose();
    let y = (&y + y.transpose()) * 0.5;
    let (sig, vecs) = sym_eig_ascending(&y);
    let mut corr = DMatrix::zeros(n, n);
    for j in (0..n).rev().take(rank) {
        let w = l_inv.transpose() * vecs.column(j);
        corr += (&w * w.transpose()) * (sig[j] / (1.0 - sig[j]));
    }
    let symmetric_error = (&b_inv + &corr - &a_inv).norm() / a_norm;

    let yn = DMatrix::identity(n, n) - &b_inv * a;
    let mut pairs: Vec<(f64, DVector<f64>)> = general_eig(&yn)
        .into_iter()
        .map(|(s, v)| {
            let re = v.map(|c| c.re);
            let im = v.map(|c| c.im);
            let u = if re.norm() >= im.norm() { re } else { im };
            (s.re, u.normalize())
        })
        .collect();
    pairs.sort_by(|p, q| q.0.abs().total_cmp(&p.0.abs()));
    let u_all = DMatrix::from_columns(&pairs.iter().map(|p| p.1.clone()).collect::<Vec<_>>());
    let v_all = u_all
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("eigenvectors are dependent".into()))?
        .transpose();
    let r = rank.min(n);
    let u = u_all.columns(0, r).into_owned();
    let v = v_all.columns(0, r).into_owned();
    let mut core = -(v.transpose() * &u);
    for j in 0..r {
        core[(j, j)] += 1.0 / pairs[j].0;
    }
    let core_inv = core
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("singular correction core".into()))?;
    let approx = (DMatrix::identity(n, n) + &u * core_inv * v.transpose()) * &b_inv;
    let nonsymmetric_error = (approx - &a_inv).norm() / a_norm;

    Ok(CorrectionCheck {
        symmetric_error,
        nonsymmetric_error,
        correction_norm: corr.norm(),
    })
}

/// Checks both correction identities for explicit SPD matrices `a` and `b`,
/// keeping the `rank` eigenpairs of `Y` largest in magnitude.
pub fn check_correction_identities(a: &SparseMatrix, b: &SparseMatrix, rank: usize) -> Result<CorrectionCheck> {
    if !a.is_square() || a.n_rows() != b.n_rows() || !b.is_square() {
        return Err(Error::DimensionMismatch {
            op: "check_correction_identities",
            expected: a.n_rows(),
            got: b.n_rows(),
        });
    }
    dense_check(&to_dmatrix(a), &to_dmatrix(b), rank)
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    m.transpose() * m / n as f64 + DMatrix::identity(n, n) * 0.5
}

/// Dense self-test of the correction identities on random SPD matrices.
pub fn verify_correction_theorems(n: usize, seed: u64) -> Result<TheoremReport> {
    if n == 0 || n > 64 {
        return Err(Error::InvalidArgument(format!("n must lie in 1..=64, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_spd(n, &mut rng);
    let b = random_spd(n, &mut rng);
    let full_rank = dense_check(&a, &b, n)?;
    let w = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let b1 = &a + &w * w.transpose();
    let rank_one = dense_check(&a, &b1, 1)?;
    Ok(TheoremReport {
        n,
        seed,
        full_rank,
        rank_one,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{build_stretched_grid, make_symmetric_problem, ProblemKind};
    use crate::symmetry::extract_subsystems;

    fn tight() -> EigOptions {
        EigOptions {
            tol: 1e-10,
            ..Default::default()
        }
    }

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn small_set(s: usize) -> SubsystemSet {
        let g = build_stretched_grid(8, 4, 4, [1.5, 1.5, 1.5]).unwrap();
        let p = make_symmetric_problem(&g, s, ProblemKind::Mirrored).unwrap();
        extract_subsystems(p.blocks()).unwrap()
    }

    fn apply(p: &dyn Preconditioner, r: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; r.len()];
        p.apply(r, &mut z);
        z
    }

    /// Dense SPD subsystems sharing one dense inner block.
    fn dense_set(m: usize, seed: u64) -> SubsystemSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inner = random_spd(m, &mut rng);
        let mut c = DMatrix::from_fn(m, m, |_, _| rng.gen_range(-0.1..0.1));
        c = (&c + c.transpose()) * 0.5;
        let rows = |d: &DMatrix<f64>| -> SparseMatrix {
            SparseMatrix::from_dense(&(0..m).map(|i| (0..m).map(|j| d[(i, j)]).collect()).collect::<Vec<_>>()).unwrap()
        };
        extract_subsystems(&[rows(&inner), rows(&c)]).unwrap()
    }

    #[test]
    fn theta_examples() {
        assert_eq!(fsai_theta(0.5), 1.0);
        assert_eq!(fsai_theta(2.0), -0.5);
        let c = AmgCorrection::from_pairs(vec![0.5, 0.25], vec![vec![1.0, 0.0]; 2], vec![vec![0.0, 1.0]; 2], true);
        assert_eq!(c.theta, vec![2.0, 4.0]);
        let d = AmgCorrection::from_pairs(vec![1e-12, 0.5], vec![vec![1.0]; 2], vec![vec![1.0]; 2], true);
        assert_eq!(d.theta, vec![2.0]);
    }

    #[test]
    fn rank_zero_is_plain_fsai() {
        let set = small_set(1);
        let p = build_lrcfsai(&set, 0, 1, &EigOptions::default()).unwrap();
        let r = random_vec(p.dim(), 1);
        let z = apply(&p, &r);
        let basis = basis_for(&set).unwrap();
        let mut rh = basis.apply(&r).unwrap();
        let m = set.block_len();
        for blk in rh.chunks_mut(m) {
            let t = p.factor().apply(blk).unwrap();
            blk.copy_from_slice(&t);
        }
        basis.apply_in_place(&mut rh);
        for (a, b) in z.iter().zip(&rh) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn lrcfsai_is_symmetric() {
        let set = small_set(2);
        let p = build_lrcfsai(&set, 4, 1, &EigOptions::default()).unwrap();
        let r = random_vec(p.dim(), 2);
        let q = random_vec(p.dim(), 3);
        let lhs = dot(&r, &apply(&p, &q));
        let rhs = dot(&q, &apply(&p, &r));
        assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(1.0));
    }

    #[test]
    fn full_rank_lrcfsai_is_exact() {
        let set = dense_set(16, 4);
        let p = build_lrcfsai(&set, 16, 1, &tight()).unwrap();
        for i in 0..2 {
            let blk = p.subsystem(i);
            let inv = to_dmatrix(&set.subsystems()[i]).try_inverse().unwrap();
            for j in 0..16 {
                let mut e = vec![0.0; 16];
                e[j] = 1.0;
                let z = apply(&blk, &e);
                for r in 0..16 {
                    assert!((z[r] - inv[(r, j)]).abs() < 1e-8, "{} vs {}", z[r], inv[(r, j)]);
                }
            }
        }
    }

    #[test]
    fn full_rank_lrcamg_is_exact() {
        let set = dense_set(16, 5);
        let inv = to_dmatrix(set.inner()).try_inverse().unwrap();
        let m = SparseMatrix::from_dense(&(0..16).map(|i| (0..16).map(|j| inv[(i, j)]).collect()).collect::<Vec<_>>()).unwrap();
        let p = build_lrcamg_with(&set, m, 16, &tight()).unwrap();
        for i in 0..2 {
            let blk = p.subsystem(i);
            let ainv = to_dmatrix(&set.subsystems()[i]).try_inverse().unwrap();
            for j in 0..16 {
                let mut e = vec![0.0; 16];
                e[j] = 1.0;
                let z = apply(&blk, &e);
                for r in 0..16 {
                    assert!((z[r] - ainv[(r, j)]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn lrcamg_rank_zero_is_block_amg_and_linear() {
        let set = small_set(1);
        let p0 = build_lrcamg(&set, 0, &AmgConfig::default(), &EigOptions::default()).unwrap();
        let r = random_vec(p0.dim(), 6);
        let z = apply(&p0, &r);
        let basis = basis_for(&set).unwrap();
        let rh = basis.apply(&r).unwrap();
        let mut zh = vec![0.0; r.len()];
        p0.inner().apply_multi(&rh, 2, &mut zh);
        basis.apply_in_place(&mut zh);
        assert_eq!(z, zh);

        let p = build_lrcamg(&set, 4, &AmgConfig::default(), &EigOptions::default()).unwrap();
        assert!(!p.is_symmetric());
        let q = random_vec(p.dim(), 7);
        let mix: Vec<f64> = r.iter().zip(&q).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let lhs = apply(&p, &mix);
        let (zr, zq) = (apply(&p, &r), apply(&p, &q));
        for j in 0..lhs.len() {
            assert!((lhs[j] - (2.0 * zr[j] - 3.0 * zq[j])).abs() < 1e-10 * (1.0 + lhs[j].abs()));
        }
    }

    #[test]
    fn block_diagonal_fsai_matches_subsystem_factors() {
        let set = small_set(1);
        let p = BlockDiagonalPreconditioner::fsai(&set, 1).unwrap();
        assert!(p.is_symmetric());
        assert_eq!(p.name(), "FSAI");
        let r = random_vec(p.dim(), 8);
        let z = apply(&p, &r);
        let basis = basis_for(&set).unwrap();
        let mut rh = basis.apply(&r).unwrap();
        let m = set.block_len();
        for (i, blk) in rh.chunks_mut(m).enumerate() {
            let f = build_fsai(&set.subsystems()[i], 1).unwrap();
            let t = f.apply(blk).unwrap();
            blk.copy_from_slice(&t);
        }
        basis.apply_in_place(&mut rh);
        for (a, b) in z.iter().zip(&rh) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn identical_matrices_need_no_correction() {
        let a = SparseMatrix::from_dense(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        let c = check_correction_identities(&a, &a, 2).unwrap();
        assert!(c.correction_norm < 1e-14);
        assert!(c.symmetric_error < 1e-15);
    }

    #[test]
    fn theorem_identities_hold() {
        let r = verify_correction_theorems(16, 11).unwrap();
        assert!(r.full_rank.symmetric_error < 1e-9, "{r:?}");
        assert!(r.full_rank.nonsymmetric_error < 1e-9, "{r:?}");
        assert!(r.rank_one.symmetric_error < 1e-8, "{r:?}");
        assert!(r.rank_one.nonsymmetric_error < 1e-8, "{r:?}");
        assert!(r.passes(1e-9, 1e-8));
        assert!(verify_correction_theorems(65, 0).is_err());
    }
}
