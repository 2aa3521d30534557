use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};

/// Rows processed per parallel task in the SpMV/SpMM kernels.
const ROW_CHUNK: usize = 2048;
/// Below this many output entries the kernels stay sequential.
const PAR_THRESHOLD: usize = 1 << 15;
/// Columns accumulated per pass over a row in SpMM.
const SPMM_LANES: usize = 16;

/// Widths of the column groups an SpMM over `n` vectors is split into.
fn lane_groups(mut n: usize) -> impl Iterator<Item = usize> {
    std::iter::from_fn(move || {
        let w = [SPMM_LANES, 8, 4, 2, 1].into_iter().find(|&w| w <= n)?;
        n -= w;
        Some(w)
    })
}

/// Compressed sparse row matrix with sorted, duplicate-free rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

/// Counters reported by the instrumented SpMM path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SpmmStats {
    /// Number of matrix value loads performed.
    pub values_read: usize,
    /// Number of passes over the stored rows.
    pub row_passes: usize,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSR arrays, validating every structural invariant.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::InvalidStructure(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if row_offsets[0] != 0 {
            return Err(Error::InvalidStructure("row_offsets[0] must be 0".into()));
        }
        if col_indices.len() != values.len() || row_offsets[n_rows] != values.len() {
            return Err(Error::InvalidStructure(format!(
                "nnz mismatch: offsets end at {}, {} columns, {} values",
                row_offsets[n_rows],
                col_indices.len(),
                values.len()
            )));
        }
        for i in 0..n_rows {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if hi < lo {
                return Err(Error::InvalidStructure(format!(
                    "row_offsets decreases at row {i}"
                )));
            }
            let cols = &col_indices[lo..hi];
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidStructure(format!(
                        "columns of row {i} are not strictly increasing"
                    )));
                }
            }
            if let Some(&last) = cols.last() {
                if last >= n_cols {
                    return Err(Error::InvalidStructure(format!(
                        "column {last} out of range in row {i}"
                    )));
                }
            }
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidStructure("NaN value stored".into()));
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Internal constructor for kernels that produce sorted rows by construction.
    pub(crate) fn from_parts_unchecked(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        debug_assert_eq!(row_offsets.len(), n_rows + 1);
        debug_assert_eq!(col_indices.len(), values.len());
        Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Builds a matrix from (row, col, value) triplets. Duplicates are summed;
    /// explicit zeros are kept.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut counts = vec![0usize; n_rows + 1];
        for &(i, j, v) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::InvalidStructure(format!(
                    "entry ({i}, {j}) outside {n_rows}x{n_cols}"
                )));
            }
            if v.is_nan() {
                return Err(Error::InvalidStructure(format!("NaN at ({i}, {j})")));
            }
            counts[i + 1] += 1;
        }
        for i in 0..n_rows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_offsets.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for i in 0..n_rows {
            scratch.clear();
            scratch.extend((counts[i]..counts[i + 1]).map(|k| (cols[k], vals[k])));
            scratch.sort_by_key(|e| e.0);
            for &(j, v) in &scratch {
                if col_indices.len() > row_offsets[i] && *col_indices.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(Self::from_parts_unchecked(
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        ))
    }

    /// Builds a matrix from a dense row-major array, storing only nonzeros.
    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, |r| r.len());
        let mut triplets = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            check_dim("from_dense", n_cols, row.len())?;
            for (j, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n_rows, n_cols, &triplets)
    }

    pub fn identity(n: usize) -> Self {
        Self::from_parts_unchecked(n, n, (0..=n).collect(), (0..n).collect(), vec![1.0; n])
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self::from_parts_unchecked(n_rows, n_cols, vec![0; n_rows + 1], Vec::new(), Vec::new())
    }

    pub fn diagonal_matrix(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_parts_unchecked(n, n, (0..=n).collect(), (0..n).collect(), diag.to_vec())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    /// Stored value at (i, j), or 0 when the position is structurally empty.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map_or(0.0, |k| vals[k])
    }

    pub fn has_entry(&self, i: usize, j: usize) -> bool {
        self.row(i).0.binary_search(&j).is_ok()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols))
            .map(|i| self.get(i, i))
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Mean number of stored entries per row.
    pub fn avg_nnz_per_row(&self) -> f64 {
        if self.n_rows == 0 {
            0.0
        } else {
            self.nnz() as f64 / self.n_rows as f64
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in out.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        out
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= alpha);
        out
    }

    /// y = A x.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("spmv", self.n_cols, x.len())?;
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// y = A x without dimension checks beyond debug assertions.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        let kernel = |row0: usize, out: &mut [f64]| {
            for (k, yi) in out.iter_mut().enumerate() {
                let i = row0 + k;
                let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
                let mut acc = 0.0;
                for p in lo..hi {
                    acc += self.values[p] * x[self.col_indices[p]];
                }
                *yi = acc;
            }
        };
        if self.n_rows >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
            y.par_chunks_mut(ROW_CHUNK)
                .enumerate()
                .for_each(|(c, out)| kernel(c * ROW_CHUNK, out));
        } else {
            kernel(0, y);
        }
    }

    /// y += alpha A x.
    pub fn spmv_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols);
        debug_assert_eq!(y.len(), self.n_rows);
        let kernel = |row0: usize, out: &mut [f64]| {
            for (k, yi) in out.iter_mut().enumerate() {
                let i = row0 + k;
                let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
                let mut acc = 0.0;
                for p in lo..hi {
                    acc += self.values[p] * x[self.col_indices[p]];
                }
                *yi += alpha * acc;
            }
        };
        if self.n_rows >= PAR_THRESHOLD && rayon::current_num_threads() > 1 {
            y.par_chunks_mut(ROW_CHUNK)
                .enumerate()
                .for_each(|(c, out)| kernel(c * ROW_CHUNK, out));
        } else {
            kernel(0, y);
        }
    }

    /// Y = A X for `n_vecs` column-contiguous vectors stored in `x`.
    ///
    /// Each row's values are loaded once per group of columns (groups of 16,
    /// 8, 4, 2 or 1), so for power-of-two block counts up to 16 the matrix is
    /// streamed exactly once.
    pub fn spmm_into(&self, x: &[f64], n_vecs: usize, y: &mut [f64]) -> SpmmStats {
        assert_eq!(x.len(), self.n_cols * n_vecs, "spmm input size");
        assert_eq!(y.len(), self.n_rows * n_vecs, "spmm output size");
        if n_vecs == 0 || self.n_rows == 0 {
            return SpmmStats::default();
        }
        let kernel = |row0: usize, outs: &mut [&mut [f64]]| -> usize {
            let mut reads = 0usize;
            let mut lane0 = 0;
            for width in lane_groups(n_vecs) {
                reads += match width {
                    16 => self.spmm_lanes::<16>(x, lane0, row0, outs),
                    8 => self.spmm_lanes::<8>(x, lane0, row0, outs),
                    4 => self.spmm_lanes::<4>(x, lane0, row0, outs),
                    2 => self.spmm_lanes::<2>(x, lane0, row0, outs),
                    _ => self.spmm_lanes::<1>(x, lane0, row0, outs),
                };
                lane0 += width;
            }
            reads
        };
        let row_passes = lane_groups(n_vecs).count();
        let values_read = if self.n_rows * n_vecs >= PAR_THRESHOLD && rayon::current_num_threads() > 1
        {
            let n_chunks = self.n_rows.div_ceil(ROW_CHUNK);
            let mut columns: Vec<_> = y
                .chunks_mut(self.n_rows)
                .map(|c| c.chunks_mut(ROW_CHUNK))
                .collect();
            let groups: Vec<Vec<&mut [f64]>> = (0..n_chunks)
                .map(|_| columns.iter_mut().map(|it| it.next().unwrap()).collect())
                .collect();
            groups
                .into_par_iter()
                .enumerate()
                .map(|(c, mut outs)| kernel(c * ROW_CHUNK, &mut outs))
                .sum()
        } else {
            let mut outs: Vec<&mut [f64]> = y.chunks_mut(self.n_rows).collect();
            kernel(0, &mut outs)
        };
        SpmmStats {
            values_read,
            row_passes,
        }
    }

    /// Rows `row0..` of `L` consecutive columns starting at `lane0`; returns
    /// the number of matrix values loaded.
    fn spmm_lanes<const L: usize>(&self, x: &[f64], lane0: usize, row0: usize, outs: &mut [&mut [f64]]) -> usize {
        let n_in = self.n_cols;
        let xs: [&[f64]; L] = std::array::from_fn(|c| &x[(lane0 + c) * n_in..(lane0 + c + 1) * n_in]);
        let rows = outs[0].len();
        for k in 0..rows {
            let i = row0 + k;
            let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
            let mut acc = [0.0f64; L];
            for p in lo..hi {
                let a = self.values[p];
                let j = self.col_indices[p];
                for c in 0..L {
                    acc[c] += a * xs[c][j];
                }
            }
            for c in 0..L {
                outs[lane0 + c][k] = acc[c];
            }
        }
        self.row_offsets[row0 + rows] - self.row_offsets[row0]
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.n_cols + 1];
        for &j in &self.col_indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.n_cols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; self.nnz()];
        let mut vals = vec![0.0; self.nnz()];
        for i in 0..self.n_rows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                cols[next[j]] = i;
                vals[next[j]] = a;
                next[j] += 1;
            }
        }
        Self::from_parts_unchecked(self.n_cols, self.n_rows, counts, cols, vals)
    }

    /// Entrywise `self + alpha * other` over the union pattern. Entries that
    /// cancel are kept as explicit zeros.
    pub fn add_scaled(&self, alpha: f64, other: &Self) -> Result<Self> {
        check_dim("add_scaled rows", self.n_rows, other.n_rows)?;
        check_dim("add_scaled cols", self.n_cols, other.n_cols)?;
        let mut offsets = Vec::with_capacity(self.n_rows + 1);
        let mut cols = Vec::with_capacity(self.nnz() + other.nnz());
        let mut vals = Vec::with_capacity(self.nnz() + other.nnz());
        offsets.push(0);
        for i in 0..self.n_rows {
            let (ca, va) = self.row(i);
            let (cb, vb) = other.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let ja = ca.get(p).copied().unwrap_or(usize::MAX);
                let jb = cb.get(q).copied().unwrap_or(usize::MAX);
                if ja < jb {
                    cols.push(ja);
                    vals.push(va[p]);
                    p += 1;
                } else if jb < ja {
                    cols.push(jb);
                    vals.push(alpha * vb[q]);
                    q += 1;
                } else {
                    cols.push(ja);
                    vals.push(va[p] + alpha * vb[q]);
                    p += 1;
                    q += 1;
                }
            }
            offsets.push(cols.len());
        }
        Ok(Self::from_parts_unchecked(
            self.n_rows,
            self.n_cols,
            offsets,
            cols,
            vals,
        ))
    }

    /// Keeps only entries for which `keep(i, j, v)` holds.
    pub fn filter(&self, mut keep: impl FnMut(usize, usize, f64) -> bool) -> Self {
        let mut offsets = Vec::with_capacity(self.n_rows + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        offsets.push(0);
        for i in 0..self.n_rows {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                if keep(i, j, a) {
                    cols.push(j);
                    vals.push(a);
                }
            }
            offsets.push(cols.len());
        }
        Self::from_parts_unchecked(self.n_rows, self.n_cols, offsets, cols, vals)
    }

    /// Symmetric permutation: `B[i, j] = A[perm[i], perm[j]]`, where `perm`
    /// maps new positions to old ones.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        check_dim("permute rows", self.n_rows, perm.len())?;
        check_dim("permute cols", self.n_cols, perm.len())?;
        let inverse = invert_permutation(perm)?;
        self.submatrix_mapped(perm, &inverse, self.n_cols)
    }

    /// Extracts `A[rows, cols]`; the column list must not repeat indices.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        let mut map = vec![usize::MAX; self.n_cols];
        for (new, &old) in cols.iter().enumerate() {
            if old >= self.n_cols || map[old] != usize::MAX {
                return Err(Error::InvalidArgument(format!(
                    "column selection index {old} invalid or repeated"
                )));
            }
            map[old] = new;
        }
        if let Some(&bad) = rows.iter().find(|&&r| r >= self.n_rows) {
            return Err(Error::InvalidArgument(format!("row {bad} out of range")));
        }
        self.submatrix_mapped(rows, &map, cols.len())
    }

    fn submatrix_mapped(&self, rows: &[usize], col_map: &[usize], n_cols: usize) -> Result<Self> {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        offsets.push(0);
        for &old in rows {
            scratch.clear();
            let (c, v) = self.row(old);
            for (&j, &a) in c.iter().zip(v) {
                let nj = col_map[j];
                if nj != usize::MAX {
                    scratch.push((nj, a));
                }
            }
            scratch.sort_unstable_by_key(|e| e.0);
            for &(j, a) in &scratch {
                cols.push(j);
                vals.push(a);
            }
            offsets.push(cols.len());
        }
        Ok(Self::from_parts_unchecked(
            rows.len(),
            n_cols,
            offsets,
            cols,
            vals,
        ))
    }

    /// `I_{n_blocks} ⊗ self`.
    pub fn kron_identity(&self, n_blocks: usize) -> Self {
        let mut offsets = Vec::with_capacity(self.n_rows * n_blocks + 1);
        let mut cols = Vec::with_capacity(self.nnz() * n_blocks);
        let mut vals = Vec::with_capacity(self.nnz() * n_blocks);
        offsets.push(0);
        for b in 0..n_blocks {
            for i in 0..self.n_rows {
                let (c, v) = self.row(i);
                cols.extend(c.iter().map(|&j| j + b * self.n_cols));
                vals.extend_from_slice(v);
                offsets.push(cols.len());
            }
        }
        Self::from_parts_unchecked(
            self.n_rows * n_blocks,
            self.n_cols * n_blocks,
            offsets,
            cols,
            vals,
        )
    }

    /// Largest |A - A^T| entry relative to the largest |A| entry.
    pub fn symmetry_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let t = self.transpose();
        let diff = self.add_scaled(-1.0, &t).expect("square");
        let scale = self.max_abs();
        if scale == 0.0 {
            0.0
        } else {
            diff.max_abs() / scale
        }
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.n_rows).all(|i| self.row(i).0.last().is_none_or(|&j| j <= i))
    }
}

/// Inverts a permutation given as new→old indices.
pub fn invert_permutation(perm: &[usize]) -> Result<Vec<usize>> {
    let mut inv = vec![usize::MAX; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        if old >= perm.len() || inv[old] != usize::MAX {
            return Err(Error::InvalidArgument(format!(
                "not a permutation: index {old} at position {new}"
            )));
        }
        inv[old] = new;
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn random_sparse(n_rows: usize, n_cols: usize, density: f64, seed: u64) -> SparseMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = Vec::new();
        for i in 0..n_rows {
            for j in 0..n_cols {
                if rng.gen::<f64>() < density {
                    t.push((i, j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        SparseMatrix::from_triplets(n_rows, n_cols, &t).unwrap()
    }

    fn dense_matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    #[test]
    fn rejects_unsorted_columns() {
        let r = SparseMatrix::new(1, 3, vec![0, 2], vec![2, 1], vec![1.0, 1.0]);
        assert!(matches!(r, Err(Error::InvalidStructure(_))));
    }

    #[test]
    fn rejects_nan_and_out_of_range() {
        assert!(SparseMatrix::new(1, 2, vec![0, 1], vec![0], vec![f64::NAN]).is_err());
        assert!(SparseMatrix::new(1, 2, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(SparseMatrix::new(2, 2, vec![1, 1, 1], vec![0], vec![1.0]).is_err());
    }

    #[test]
    fn triplets_sum_duplicates_and_keep_zeros() {
        let a = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 0.0)]).unwrap();
        assert_eq!(a.nnz(), 2);
        assert_eq!(a.get(0, 1), 3.0);
        assert!(a.has_entry(1, 0));
    }

    #[test]
    fn spmv_identity() {
        let y = SparseMatrix::identity(3).spmv(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn spmv_tridiagonal_constant() {
        let a = SparseMatrix::from_dense(&[vec![2.0, -1.0], vec![-1.0, 2.0]]).unwrap();
        assert_eq!(a.spmv(&[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn spmv_dimension_mismatch() {
        let a = SparseMatrix::identity(3);
        assert!(matches!(
            a.spmv(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spmv_matches_dense_oracle() {
        let a = random_sparse(8, 8, 0.5, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = a.spmv(&x).unwrap();
        let y_ref = dense_matvec(&a.to_dense(), &x);
        let scale = y_ref.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (u, v) in y.iter().zip(&y_ref) {
            assert!((u - v).abs() <= 1e-14 * scale.max(1.0));
        }
    }

    #[test]
    fn spmm_reads_values_once_per_row() {
        let a = random_sparse(40, 40, 0.2, 3);
        let x = vec![1.0; 40 * 8];
        let mut y = vec![0.0; 40 * 8];
        let stats = a.spmm_into(&x, 8, &mut y);
        assert_eq!(stats.values_read, a.nnz());
        assert_eq!(stats.row_passes, 1);
    }

    #[test]
    fn transpose_examples() {
        assert_eq!(SparseMatrix::identity(3).transpose(), SparseMatrix::identity(3));
        let a = SparseMatrix::from_dense(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(
            a.transpose().to_dense(),
            vec![vec![0.0, 0.0], vec![1.0, 0.0]]
        );
    }

    #[test]
    fn permute_and_submatrix() {
        let a = SparseMatrix::from_dense(&[
            vec![1.0, 2.0, 0.0],
            vec![3.0, 4.0, 5.0],
            vec![0.0, 6.0, 7.0],
        ])
        .unwrap();
        let p = a.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.get(0, 0), 7.0);
        assert_eq!(p.get(0, 2), 6.0);
        assert_eq!(p.get(2, 1), 3.0);
        let s = a.submatrix(&[1], &[2, 0]).unwrap();
        assert_eq!(s.to_dense(), vec![vec![5.0, 3.0]]);
        assert!(a.permute(&[0, 0, 1]).is_err());
    }

    #[test]
    fn kron_identity_layout() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let k = a.kron_identity(2);
        assert_eq!(k.n_rows(), 4);
        assert_eq!(k.get(2, 3), 2.0);
        assert_eq!(k.get(0, 2), 0.0);
    }

    proptest::proptest! {
        #[test]
        fn transpose_is_involution(seed in 0u64..500, rows in 1usize..12, cols in 1usize..12) {
            let a = random_sparse(rows, cols, 0.3, seed);
            proptest::prop_assert_eq!(a.transpose().transpose(), a);
        }

        #[test]
        fn spmm_equals_columnwise_spmv(seed in 0u64..500, k in 1usize..20) {
            let a = random_sparse(16, 16, 0.25, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
            let x: Vec<f64> = (0..16 * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut y = vec![0.0; 16 * k];
            a.spmm_into(&x, k, &mut y);
            for c in 0..k {
                let yc = a.spmv(&x[c * 16..(c + 1) * 16]).unwrap();
                for i in 0..16 {
                    let scale = yc[i].abs().max(1.0);
                    proptest::prop_assert!((y[c * 16 + i] - yc[i]).abs() <= 1e-14 * scale);
                }
            }
        }
    }
}
