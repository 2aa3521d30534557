//! Smallest eigenpairs of operators that are only available through their
//! action, by thick-restarted Lanczos/Arnoldi with full reorthogonalization.

use log::warn;
use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dense::{general_eig, sym_eig_ascending};
use crate::error::{Error, Result};
use crate::krylov::LinearOperator;
use crate::vecops::{axpy, dot, norm};

#[derive(Debug, Clone, PartialEq)]
pub struct EigOptions {
    /// Accept a pair when `‖X v − λ v‖ ≤ tol · ‖X‖`.
    pub tol: f64,
    pub max_restarts: usize,
    /// Krylov subspace size; defaults to `max(2k + 8, 20)`.
    pub subspace_dim: Option<usize>,
    pub seed: u64,
    /// Vectors spanning a subspace to exclude from the search (for example a
    /// known null space). They need not be orthonormal.
    pub deflate: Vec<Vec<f64>>,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self {
            tol: 1e-2,
            max_restarts: 500,
            subspace_dim: None,
            seed: 0x5eed,
            deflate: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymEigenPairs {
    /// Ascending.
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// Residual norms `‖X v − λ v‖` with `X` restricted to the complement of
    /// the deflation space.
    pub residuals: Vec<f64>,
    /// Estimate of `‖X‖` (largest Ritz value magnitude seen).
    pub norm_estimate: f64,
    pub converged: bool,
    pub operator_applies: usize,
}

impl SymEigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Right and left eigenvectors scaled so that `leftᵀ right = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiEigenPairs {
    pub values: Vec<f64>,
    pub right: Vec<Vec<f64>>,
    pub left: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub norm_estimate: f64,
    pub converged: bool,
}

impl BiEigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Symmetric,
    General,
}

struct RitzPair {
    value: Complex<f64>,
    vector: DVector<Complex<f64>>,
}

struct Engine<'a> {
    op: &'a dyn LinearOperator,
    q: Vec<Vec<f64>>,
    rng: ChaCha8Rng,
    applies: usize,
}

impl Engine<'_> {
    fn project(&self, v: &mut [f64]) {
        for _ in 0..2 {
            for u in &self.q {
                let c = dot(u, v);
                axpy(-c, u, v);
            }
        }
    }

    fn apply(&mut self, v: &[f64], w: &mut [f64]) {
        self.op.apply(v, w);
        self.applies += 1;
        self.project(w);
    }

    fn random_orthogonal(&mut self, basis: &[Vec<f64>]) -> Option<Vec<f64>> {
        let n = self.op.dim();
        for _ in 0..5 {
            let mut v: Vec<f64> = (0..n).map(|_| self.rng.gen_range(-1.0..1.0)).collect();
            self.project(&mut v);
            orthogonalize(basis, &mut v);
            let nv = norm(&v);
            if nv > 1e-8 {
                v.iter_mut().for_each(|x| *x /= nv);
                return Some(v);
            }
        }
        None
    }
}

/// Two passes of classical Gram-Schmidt; returns the accumulated coefficients.
fn orthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut coefs = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (c, v) in coefs.iter_mut().zip(basis) {
            let h = dot(v, w);
            axpy(-h, v, w);
            *c += h;
        }
    }
    coefs
}

fn orthonormal_deflation(vectors: &[Vec<f64>], n: usize) -> Result<Vec<Vec<f64>>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                op: "eigen deflation",
                expected: n,
                got: v.len(),
            });
        }
        let mut w = v.clone();
        orthogonalize(&q, &mut w);
        let nw = norm(&w);
        if nw > 1e-12 * norm(v).max(f64::MIN_POSITIVE) {
            w.iter_mut().for_each(|x| *x /= nw);
            q.push(w);
        }
    }
    Ok(q)
}

fn ritz_pairs(h: &DMatrix<f64>, mode: Mode) -> Vec<RitzPair> {
    match mode {
        Mode::Symmetric => {
            let sym = (h + h.transpose()) * 0.5;
            let (vals, vecs) = sym_eig_ascending(&sym);
            vals.iter()
                .enumerate()
                .map(|(i, &v)| RitzPair {
                    value: Complex::new(v, 0.0),
                    vector: vecs.column(i).map(|x| Complex::new(x, 0.0)),
                })
                .collect()
        }
        Mode::General => {
            let mut pairs: Vec<RitzPair> = general_eig(h)
                .into_iter()
                .map(|(value, vector)| RitzPair { value, vector })
                .collect();
            pairs.sort_by(|a, b| {
                a.value
                    .norm()
                    .total_cmp(&b.value.norm())
                    .then(a.value.im.total_cmp(&b.value.im).reverse())
            });
            pairs
        }
    }
}

fn is_real(z: Complex<f64>) -> bool {
    z.im.abs() <= 1e-8 * z.norm().max(f64::MIN_POSITIVE)
}

/// Real vector from a complex eigenvector of a real eigenvalue.
fn real_part(v: &DVector<Complex<f64>>) -> DVector<f64> {
    let big = v.iter().fold(Complex::new(0.0, 0.0), |m, z| if z.norm() > m.norm() { *z } else { m });
    let phase = if big.norm() > 0.0 { big.conj() / big.norm() } else { Complex::new(1.0, 0.0) };
    let r = v.map(|z| (z * phase).re);
    let nr = r.norm();
    if nr > 0.0 {
        r / nr
    } else {
        r
    }
}

/// Orthonormal real basis spanning the first `p` selected Ritz vectors
/// (conjugate partners included).
fn restart_basis(pairs: &[RitzPair], p: usize, m: usize) -> DMatrix<f64> {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let mut i = 0;
    while i < pairs.len() && cols.len() < p {
        let pr = &pairs[i];
        if is_real(pr.value) {
            cols.push(real_part(&pr.vector));
            i += 1;
        } else {
            cols.push(pr.vector.map(|z| z.re));
            cols.push(pr.vector.map(|z| z.im));
            // Skip the conjugate partner, which spans the same real subspace.
            i += 1;
            if i < pairs.len() && (pairs[i].value - pr.value.conj()).norm() <= 1e-8 * pr.value.norm() {
                i += 1;
            }
        }
    }
    let mut y = DMatrix::zeros(m, cols.len());
    for (j, c) in cols.iter().enumerate() {
        y.set_column(j, c);
    }
    // Gram-Schmidt, dropping dependent columns.
    let mut kept: Vec<DVector<f64>> = Vec::new();
    for j in 0..y.ncols() {
        let mut c = y.column(j).into_owned();
        for _ in 0..2 {
            for u in &kept {
                let h = u.dot(&c);
                c -= u * h;
            }
        }
        let nc = c.norm();
        if nc > 1e-10 {
            kept.push(c / nc);
        }
    }
    let mut out = DMatrix::zeros(m, kept.len());
    for (j, c) in kept.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}

struct RawPairs {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
    residuals: Vec<f64>,
    norm_estimate: f64,
    converged: bool,
    applies: usize,
}

fn combine(basis: &[Vec<f64>], y: &DVector<f64>, n: usize) -> Vec<f64> {
    let mut u = vec![0.0; n];
    for (v, &c) in basis.iter().zip(y.iter()) {
        axpy(c, v, &mut u);
    }
    u
}

fn run(op: &dyn LinearOperator, k: usize, opts: &EigOptions, mode: Mode) -> Result<RawPairs> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("eigen tolerance must be positive, got {}", opts.tol)));
    }
    let n = op.dim();
    let q = orthonormal_deflation(&opts.deflate, n)?;
    let n_eff = n - q.len();
    let k = k.min(n_eff);
    let empty = || RawPairs {
        values: Vec::new(),
        vectors: Vec::new(),
        residuals: Vec::new(),
        norm_estimate: 0.0,
        converged: true,
        applies: 0,
    };
    if k == 0 {
        return Ok(empty());
    }
    let m = opts
        .subspace_dim
        .unwrap_or((2 * k + 8).max(20))
        .max(k + 2)
        .min(n_eff);
    let mut eng = Engine {
        op,
        q,
        rng: ChaCha8Rng::seed_from_u64(opts.seed),
        applies: 0,
    };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let v0 = eng
        .random_orthogonal(&[])
        .ok_or_else(|| Error::InvalidArgument("no start vector outside the deflation space".into()))?;
    basis.push(v0);
    let mut h = DMatrix::<f64>::zeros(m + 1, m);
    let mut p = 0;
    let mut norm_estimate = 0.0f64;
    let mut w = vec![0.0; n];
    for restart in 0..=opts.max_restarts {
        let mut exhausted = false;
        for j in p..m {
            eng.apply(&basis[j], &mut w);
            let mut coefs = orthogonalize(&basis, &mut w);
            // Subtracting basis vectors reintroduces their rounding-level
            // deflation components, which a small beta would then amplify.
            eng.project(&mut w);
            for (c, d) in coefs.iter_mut().zip(orthogonalize(&basis, &mut w)) {
                *c += d;
            }
            eng.project(&mut w);
            for (i, c) in coefs.iter().enumerate() {
                h[(i, j)] += c;
            }
            let beta = norm(&w);
            let col_scale = coefs.iter().map(|c| c * c).sum::<f64>().sqrt().max(beta);
            if j + 1 == n_eff {
                h[(j + 1, j)] = 0.0;
                exhausted = true;
                break;
            }
            if beta <= 1e-10 * col_scale {
                h[(j + 1, j)] = 0.0;
                match eng.random_orthogonal(&basis) {
                    Some(v) => basis.push(v),
                    None => {
                        exhausted = true;
                        break;
                    }
                }
            } else {
                h[(j + 1, j)] = beta;
                basis.push(w.iter().map(|x| x / beta).collect());
            }
        }
        let size = if exhausted { basis.len() } else { m };
        let hm = h.view((0, 0), (size, size)).into_owned();
        let beta_m = if exhausted { 0.0 } else { h[(m, m - 1)] };
        let pairs = ritz_pairs(&hm, mode);
        norm_estimate = pairs.iter().fold(norm_estimate, |acc, pr| acc.max(pr.value.norm()));
        let threshold = opts.tol * norm_estimate.max(f64::MIN_POSITIVE);
        let wanted = k.min(pairs.len());
        let n_conv = pairs
            .iter()
            .take(wanted)
            .filter(|pr| beta_m * pr.vector[size - 1].norm() <= threshold)
            .count();
        let last = restart == opts.max_restarts;
        if n_conv == wanted || exhausted || last {
            let mut out = RawPairs {
                norm_estimate,
                converged: true,
                applies: eng.applies,
                ..empty()
            };
            let mut ax = vec![0.0; n];
            for pr in pairs.iter().take(wanted) {
                if mode == Mode::General && !is_real(pr.value) {
                    warn!("dropping complex Ritz value {}", pr.value);
                    continue;
                }
                let y = real_part(&pr.vector);
                let u = combine(&basis[..size], &y, n);
                eng.apply(&u, &mut ax);
                let theta = pr.value.re;
                let res = ax.iter().zip(&u).map(|(a, b)| (a - theta * b).powi(2)).sum::<f64>().sqrt();
                out.values.push(theta);
                out.vectors.push(u);
                out.residuals.push(res);
            }
            out.applies = eng.applies;
            let ok = out.residuals.iter().all(|&r| r <= threshold * 1.000001 + 1e-14);
            if ok || exhausted || last {
                out.converged = ok || exhausted;
                if !out.converged {
                    warn!(
                        "eigen-solve stopped after {} restarts with residuals {:?}",
                        opts.max_restarts, out.residuals
                    );
                }
                return Ok(out);
            }
        }
        let keep = (k + (m - k) / 2).clamp(1, m - 1);
        let y = restart_basis(&pairs, keep, m);
        let keep = y.ncols();
        let s = y.transpose() * &hm * &y;
        let mut new_basis: Vec<Vec<f64>> = (0..keep)
            .map(|i| combine(&basis[..m], &y.column(i).into_owned(), n))
            .collect();
        new_basis.push(basis[m].clone());
        basis = new_basis;
        let mut hn = DMatrix::<f64>::zeros(m + 1, m);
        hn.view_mut((0, 0), (keep, keep)).copy_from(&s);
        for c in 0..keep {
            hn[(keep, c)] = beta_m * y[(m - 1, c)];
        }
        h = hn;
        p = keep;
    }
    unreachable!("the last restart always returns")
}

/// The `k` smallest eigenpairs of a symmetric operator.
pub fn smallest_eigs_sym(x: &dyn LinearOperator, k: usize, opts: &EigOptions) -> Result<SymEigenPairs> {
    let r = run(x, k, opts, Mode::Symmetric)?;
    Ok(SymEigenPairs {
        values: r.values,
        vectors: r.vectors,
        residuals: r.residuals,
        norm_estimate: r.norm_estimate,
        converged: r.converged,
        operator_applies: r.applies,
    })
}

/// The `k` smallest-magnitude real eigenpairs of `x`, with left eigenvectors
/// obtained from `xt` (the transpose of `x`) and biorthonormalized.
pub fn smallest_eigs_nonsym(
    x: &dyn LinearOperator,
    xt: &dyn LinearOperator,
    k: usize,
    opts: &EigOptions,
) -> Result<BiEigenPairs> {
    if x.dim() != xt.dim() {
        return Err(Error::DimensionMismatch {
            op: "smallest_eigs_nonsym",
            expected: x.dim(),
            got: xt.dim(),
        });
    }
    let right = run(x, k, opts, Mode::General)?;
    let left = run(xt, k, opts, Mode::General)?;
    let mut kk = right.values.len().min(left.values.len());
    let n = x.dim();
    while kk > 0 {
        let mut m = DMatrix::zeros(kk, kk);
        for i in 0..kk {
            for j in 0..kk {
                m[(i, j)] = dot(&left.vectors[i], &right.vectors[j]);
            }
        }
        let sv = m.clone().singular_values();
        let cond = sv.max() / sv.min().max(f64::MIN_POSITIVE);
        if cond <= 1e8 {
            let minv_t = m
                .try_inverse()
                .expect("well-conditioned")
                .transpose();
            let lefts: Vec<Vec<f64>> = (0..kk)
                .map(|j| {
                    let mut v = vec![0.0; n];
                    for i in 0..kk {
                        axpy(minv_t[(i, j)], &left.vectors[i], &mut v);
                    }
                    v
                })
                .collect();
            return Ok(BiEigenPairs {
                values: right.values[..kk].to_vec(),
                right: right.vectors[..kk].to_vec(),
                left: lefts,
                residuals: right.residuals[..kk].to_vec(),
                norm_estimate: right.norm_estimate,
                converged: right.converged && left.converged,
            });
        }
        warn!("left/right eigenvectors nearly dependent (cond {cond:e}); reducing rank to {}", kk - 1);
        kk -= 1;
    }
    Ok(BiEigenPairs {
        values: Vec::new(),
        right: Vec::new(),
        left: Vec::new(),
        residuals: Vec::new(),
        norm_estimate: right.norm_estimate,
        converged: right.converged && left.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::to_dmatrix;
    use crate::SparseMatrix;

    fn random_spd(n: usize, seed: u64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let a = &b * b.transpose() + DMatrix::identity(n, n) * 0.1;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[(i, j)]).collect()).collect();
        SparseMatrix::from_dense(&rows).unwrap()
    }

    fn tight() -> EigOptions {
        EigOptions {
            tol: 1e-8,
            ..EigOptions::default()
        }
    }

    #[test]
    fn diagonal_smallest() {
        let x = SparseMatrix::diagonal_matrix(&[0.1, 1.0, 1.0, 1.0]);
        let r = smallest_eigs_sym(&x, 1, &tight()).unwrap();
        assert!((r.values[0] - 0.1).abs() < 1e-10);
        assert!((r.vectors[0][0].abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn identity_degenerate() {
        let x = SparseMatrix::identity(6);
        let r = smallest_eigs_sym(&x, 2, &tight()).unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.values.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(dot(&r.vectors[0], &r.vectors[1]).abs() < 1e-10);
    }

    #[test]
    fn random_spd_matches_dense() {
        let a = random_spd(64, 4);
        let (ev, _) = sym_eig_ascending(&to_dmatrix(&a));
        let r = smallest_eigs_sym(&a, 4, &tight()).unwrap();
        assert!(r.converged);
        for i in 0..4 {
            assert!((r.values[i] - ev[i]).abs() < 1e-6, "{} vs {}", r.values[i], ev[i]);
        }
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&r.vectors[i], &r.vectors[j]) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn deflation_skips_null_space() {
        let n: usize = 30;
        let mut t = Vec::new();
        for i in 0..n {
            let mut d = 0.0;
            for j in [i.wrapping_sub(1), i + 1usize] {
                if j < n {
                    t.push((i, j, -1.0));
                    d += 1.0;
                }
            }
            t.push((i, i, d));
        }
        let a = SparseMatrix::from_triplets(n, n, &t).unwrap();
        let opts = EigOptions {
            deflate: vec![vec![1.0; n]],
            ..tight()
        };
        let r = smallest_eigs_sym(&a, 2, &opts).unwrap();
        let want = 2.0 - 2.0 * (std::f64::consts::PI / n as f64).cos();
        assert!((r.values[0] - want).abs() < 1e-8);
    }

    #[test]
    fn nonsym_diagonal_and_biorthonormal() {
        let x = SparseMatrix::diagonal_matrix(&[0.2, 1.0, 1.0]);
        let r = smallest_eigs_nonsym(&x, &x, 1, &tight()).unwrap();
        assert!((r.values[0] - 0.2).abs() < 1e-10);
        assert!((r.right[0][0].abs() - 1.0).abs() < 1e-8);
        assert!((dot(&r.left[0], &r.right[0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nonsym_similar_to_spd() {
        // X = D A with D diagonal positive: similar to D^½ A D^½.
        let n = 32;
        let a = random_spd(n, 7);
        let d: Vec<f64> = (0..n).map(|i| 0.5 + (i as f64) / n as f64).collect();
        let x = SparseMatrix::diagonal_matrix(&d);
        let xm = crate::sparse::spgemm(&x, &a).unwrap();
        let xt = xm.transpose();
        let r = smallest_eigs_nonsym(&xm, &xt, 4, &tight()).unwrap();
        assert_eq!(r.len(), 4);
        let scale = r.norm_estimate;
        for i in 0..4 {
            let xu = xm.spmv(&r.right[i]).unwrap();
            let res: f64 = xu.iter().zip(&r.right[i]).map(|(p, q)| (p - r.values[i] * q).powi(2)).sum::<f64>().sqrt();
            assert!(res <= 1e-8 * scale * 1.01);
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot(&r.left[i], &r.right[j]) - want).abs() < 1e-8);
            }
        }
        let sym = {
            let sq: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
            let s = SparseMatrix::diagonal_matrix(&sq);
            crate::sparse::spgemm(&crate::sparse::spgemm(&s, &a).unwrap(), &s).unwrap()
        };
        let rs = smallest_eigs_sym(&sym, 4, &tight()).unwrap();
        for i in 0..4 {
            assert!((rs.values[i] - r.values[i]).abs() < 1e-6);
        }
    }
}
