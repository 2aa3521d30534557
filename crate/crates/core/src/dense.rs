//! Small dense kernels backing local FSAI systems, coarsest-level solves and
//! the projected eigenproblems of the Krylov eigensolvers.

use nalgebra::{Complex, DMatrix, DVector, Schur, SymmetricEigen};

use crate::sparse::SparseMatrix;

pub(crate) fn to_dmatrix(a: &SparseMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.n_rows(), a.n_cols());
    for i in 0..a.n_rows() {
        let (c, v) = a.row(i);
        for (&j, &x) in c.iter().zip(v) {
            m[(i, j)] = x;
        }
    }
    m
}

/// Solves the SPD system `a x = b`; `None` if the Cholesky factorization fails.
pub(crate) fn spd_solve(a: DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    a.cholesky().map(|c| c.solve(b))
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues ascending.
pub(crate) fn sym_eig_ascending(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(a.nrows(), a.nrows());
    for (new, &old) in order.iter().enumerate() {
        vectors.set_column(new, &eig.eigenvectors.column(old));
    }
    (values, vectors)
}

/// Moore-Penrose pseudo-inverse of a symmetric matrix. Eigenvalues below
/// `rel_tol * max|λ|` are treated as zero.
pub(crate) fn sym_pinv(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let sym = (a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = DMatrix::zeros(n, n);
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam.abs() > rel_tol * scale && lam != 0.0 {
            let v = eig.eigenvectors.column(k);
            out += (&v * v.transpose()) / lam;
        }
    }
    out
}

/// Eigenvalues of a general real matrix. nalgebra's QR iteration can stall
/// at machine-precision deflation thresholds, so looser ones are tried next.
fn eigenvalues(h: &DMatrix<f64>) -> DVector<Complex<f64>> {
    let n = h.nrows();
    let max_iter = 100 * n.max(10);
    for eps in [f64::EPSILON, 1e-14, 1e-12, 1e-10] {
        if let Some(s) = Schur::try_new(h.clone(), eps, max_iter) {
            return s.complex_eigenvalues();
        }
    }
    panic!("real Schur iteration failed to converge on a {n}x{n} matrix");
}

/// Eigenpairs of a general real matrix: eigenvalues from the real Schur
/// form, eigenvectors by complex inverse iteration. Vectors have unit norm.
/// Eigenvectors belonging to numerically equal eigenvalues are made mutually
/// orthogonal so that degenerate clusters yield independent vectors.
pub(crate) fn general_eig(h: &DMatrix<f64>) -> Vec<(Complex<f64>, DVector<Complex<f64>>)> {
    let n = h.nrows();
    if n == 0 {
        return Vec::new();
    }
    let values = eigenvalues(h);
    let hc: DMatrix<Complex<f64>> = h.map(|x| Complex::new(x, 0.0));
    let scale = h.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut out: Vec<(Complex<f64>, DVector<Complex<f64>>)> = Vec::with_capacity(n);
    for (idx, &lam) in values.iter().enumerate() {
        let shift = lam + Complex::new(1e-10 * scale, 1e-11 * scale);
        let mut c = hc.clone();
        for i in 0..n {
            c[(i, i)] -= shift;
        }
        let lu = c.lu();
        let cluster: Vec<DVector<Complex<f64>>> = out
            .iter()
            .filter(|(mu, _)| (mu - lam).norm() <= 1e-8 * scale)
            .map(|(_, v)| v.clone())
            .collect();
        let mut v = DVector::from_fn(n, |i, _| {
            Complex::new(1.0 + ((i * 7 + idx * 13) % 11) as f64 * 0.1, 0.0)
        });
        for _ in 0..3 {
            for u in &cluster {
                let proj = u.dotc(&v);
                v -= u * proj;
            }
            v = lu.solve(&v).unwrap_or_else(|| v.clone());
            let norm = v.norm();
            if norm > 0.0 && norm.is_finite() {
                v /= Complex::new(norm, 0.0);
            }
        }
        for u in &cluster {
            let proj = u.dotc(&v);
            v -= u * proj;
        }
        let norm = v.norm();
        if norm > 0.0 {
            v /= Complex::new(norm, 0.0);
        }
        out.push((lam, v));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_singular_laplacian() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        let p = sym_pinv(&a, 1e-12);
        let apa = &a * &p * &a;
        assert!((apa - &a).norm() < 1e-12);
        let ones = DVector::from_element(3, 1.0);
        assert!((&p * ones).norm() < 1e-12);
    }

    #[test]
    fn general_eig_recovers_pairs() {
        let h = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 3.0, 1.0, 0.0, 0.0, 5.0]);
        let hc = h.map(|x| Complex::new(x, 0.0));
        for (lam, v) in general_eig(&h) {
            let r = &hc * &v - &v * lam;
            assert!(r.norm() < 1e-8, "residual {}", r.norm());
        }
    }

    #[test]
    fn general_eig_degenerate_cluster_is_independent() {
        let h = DMatrix::<f64>::identity(3, 3);
        let pairs = general_eig(&h);
        for i in 0..3 {
            for j in 0..i {
                assert!(pairs[i].1.dotc(&pairs[j].1).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn rotation_has_complex_pair() {
        let h = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let hc = h.map(|x| Complex::new(x, 0.0));
        let pairs = general_eig(&h);
        assert!(pairs.iter().all(|(l, _)| (l.im.abs() - 1.0).abs() < 1e-12));
        for (lam, v) in pairs {
            assert!((&hc * &v - &v * lam).norm() < 1e-8);
        }
    }
}
