use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::sparse::SparseMatrix;

const ROWS_PER_TASK: usize = 1024;

/// C = A B by row-wise Gustavson accumulation into a dense workspace.
pub fn spgemm(a: &SparseMatrix, b: &SparseMatrix) -> Result<SparseMatrix> {
    check_dim("spgemm", a.n_cols(), b.n_rows())?;
    let n_cols = b.n_cols();
    let chunks: Vec<(Vec<usize>, Vec<usize>, Vec<f64>)> = (0..a.n_rows())
        .collect::<Vec<_>>()
        .par_chunks(ROWS_PER_TASK)
        .map(|rows| {
            let mut acc = vec![0.0; n_cols];
            let mut marker = vec![false; n_cols];
            let mut touched: Vec<usize> = Vec::new();
            let mut lens = Vec::with_capacity(rows.len());
            let mut cols = Vec::new();
            let mut vals = Vec::new();
            for &i in rows {
                touched.clear();
                let (ac, av) = a.row(i);
                for (&k, &aik) in ac.iter().zip(av) {
                    let (bc, bv) = b.row(k);
                    for (&j, &bkj) in bc.iter().zip(bv) {
                        if !marker[j] {
                            marker[j] = true;
                            touched.push(j);
                        }
                        acc[j] += aik * bkj;
                    }
                }
                touched.sort_unstable();
                for &j in &touched {
                    cols.push(j);
                    vals.push(acc[j]);
                    acc[j] = 0.0;
                    marker[j] = false;
                }
                lens.push(touched.len());
            }
            (lens, cols, vals)
        })
        .collect();
    let mut offsets = Vec::with_capacity(a.n_rows() + 1);
    offsets.push(0);
    let total: usize = chunks.iter().map(|c| c.1.len()).sum();
    let mut cols = Vec::with_capacity(total);
    let mut vals = Vec::with_capacity(total);
    for (lens, c, v) in chunks {
        for l in lens {
            let last = *offsets.last().unwrap();
            offsets.push(last + l);
        }
        cols.extend(c);
        vals.extend(v);
    }
    Ok(SparseMatrix::from_parts_unchecked(
        a.n_rows(),
        n_cols,
        offsets,
        cols,
        vals,
    ))
}

/// Galerkin product `P^T A P`, computed exactly (no dropping).
pub fn triple_product_rap(p: &SparseMatrix, a: &SparseMatrix) -> Result<SparseMatrix> {
    if !a.is_square() {
        return Err(Error::InvalidArgument("RAP needs a square operator".into()));
    }
    check_dim("triple_product_rap", a.n_cols(), p.n_rows())?;
    let ap = spgemm(a, p)?;
    spgemm(&p.transpose(), &ap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(r: usize, c: usize, density: f64, seed: u64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..r {
            for j in 0..c {
                if rng.gen::<f64>() < density {
                    t.push((i, j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        SparseMatrix::from_triplets(r, c, &t).unwrap()
    }

    fn dense_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let m = b[0].len();
        a.iter()
            .map(|row| {
                (0..m)
                    .map(|j| row.iter().enumerate().map(|(k, v)| v * b[k][j]).sum())
                    .collect()
            })
            .collect()
    }

    fn transpose_dense(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
    }

    #[test]
    fn identity_prolongation_returns_operator() {
        let a = random_sparse(6, 6, 0.4, 1);
        let c = triple_product_rap(&SparseMatrix::identity(6), &a).unwrap();
        assert_eq!(c.to_dense(), a.to_dense());
    }

    #[test]
    fn constant_vector_in_null_space() {
        let n = 5;
        let mut t = Vec::new();
        for i in 0..n {
            let mut d = 0.0;
            if i > 0 {
                t.push((i, i - 1, -1.0));
                d += 1.0;
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                d += 1.0;
            }
            t.push((i, i, d));
        }
        let a = SparseMatrix::from_triplets(n, n, &t).unwrap();
        let ones: Vec<_> = (0..n).map(|i| (i, 0, 1.0)).collect();
        let p = SparseMatrix::from_triplets(n, 1, &ones).unwrap();
        let c = triple_product_rap(&p, &a).unwrap();
        assert_eq!((c.n_rows(), c.n_cols()), (1, 1));
        assert_eq!(c.get(0, 0), 0.0);
    }

    #[test]
    fn matches_dense_oracle() {
        let a = random_sparse(8, 8, 0.5, 11);
        let p = random_sparse(8, 3, 0.5, 12);
        let c = triple_product_rap(&p, &a).unwrap().to_dense();
        let pd = p.to_dense();
        let expect = dense_mul(&transpose_dense(&pd), &dense_mul(&a.to_dense(), &pd));
        for i in 0..3 {
            for j in 0..3 {
                assert!((c[i][j] - expect[i][j]).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn rap_dimension_mismatch() {
        let a = SparseMatrix::identity(4);
        let p = SparseMatrix::identity(3);
        assert!(triple_product_rap(&p, &a).is_err());
    }

    #[test]
    fn rap_keeps_symmetry() {
        let b = random_sparse(10, 10, 0.3, 5);
        let a = b.add_scaled(1.0, &b.transpose()).unwrap();
        let p = random_sparse(10, 4, 0.4, 6);
        let c = triple_product_rap(&p, &a).unwrap();
        let ct = c.transpose();
        assert_eq!(c.row_offsets(), ct.row_offsets());
        assert_eq!(c.col_indices(), ct.col_indices());
        assert!(c.symmetry_defect() <= 1e-14);
    }
}
