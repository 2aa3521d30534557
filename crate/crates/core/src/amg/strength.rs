use crate::sparse::SparseMatrix;

/// Symmetrized strong-coupling graph stored as a 0/1 matrix without diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct StrengthGraph {
    t: SparseMatrix,
    theta: f64,
}

impl StrengthGraph {
    pub fn matrix(&self) -> &SparseMatrix {
        &self.t
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn n(&self) -> usize {
        self.t.n_rows()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.t.row(i).0
    }

    pub fn is_strong(&self, i: usize, j: usize) -> bool {
        self.t.has_entry(i, j)
    }

    pub fn n_edges(&self) -> usize {
        self.t.nnz()
    }

    /// Wraps an existing adjacency matrix (any nonzero counts as an edge).
    pub fn from_adjacency(adj: &SparseMatrix) -> Self {
        let sym = adj
            .add_scaled(1.0, &adj.transpose())
            .expect("square adjacency")
            .filter(|i, j, v| i != j && v != 0.0);
        let t = SparseMatrix::new(
            sym.n_rows(),
            sym.n_cols(),
            sym.row_offsets().to_vec(),
            sym.col_indices().to_vec(),
            vec![1.0; sym.nnz()],
        )
        .expect("valid structure");
        Self { t, theta: 0.0 }
    }
}

/// `i` depends strongly on `j` when `|a_ij| ≥ θ · max_{k≠i} |a_ik|`; an edge is
/// kept when the dependence holds in either direction.
pub fn strength_graph(a: &SparseMatrix, theta: f64) -> StrengthGraph {
    assert!(a.is_square(), "strength graph needs a square matrix");
    let mut t = Vec::new();
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        let max = cols
            .iter()
            .zip(vals)
            .filter(|(&j, _)| j != i)
            .fold(0.0f64, |m, (_, v)| m.max(v.abs()));
        if max == 0.0 {
            continue;
        }
        for (&j, &v) in cols.iter().zip(vals) {
            if j != i && v != 0.0 && v.abs() >= theta * max {
                t.push((i, j, 1.0));
            }
        }
    }
    let s = SparseMatrix::from_triplets(a.n_rows(), a.n_cols(), &t).expect("in range");
    let mut g = StrengthGraph::from_adjacency(&s);
    g.theta = theta;
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_has_no_edges() {
        let g = strength_graph(&SparseMatrix::diagonal_matrix(&[1.0, 2.0, 3.0]), 0.25);
        assert_eq!(g.n_edges(), 0);
    }

    #[test]
    fn laplacian_keeps_all_couplings() {
        let a = SparseMatrix::from_dense(&[
            vec![1.0, -1.0, 0.0],
            vec![-1.0, 2.0, -1.0],
            vec![0.0, -1.0, 1.0],
        ])
        .unwrap();
        let g = strength_graph(&a, 0.25);
        assert_eq!(g.n_edges(), 4);
        assert!(g.is_strong(0, 1) && g.is_strong(2, 1));
    }

    #[test]
    fn anisotropic_keeps_strong_direction() {
        // 3x3 grid, x couplings 1, y couplings 100.
        let idx = |x: usize, y: usize| x + 3 * y;
        let mut t = Vec::new();
        for y in 0..3 {
            for x in 0..3 {
                let i = idx(x, y);
                let mut d = 0.0;
                for (dx, dy, w) in [(1i32, 0i32, 1.0), (-1, 0, 1.0), (0, 1, 100.0), (0, -1, 100.0)] {
                    let (nx, ny) = (x as i32 + dx, y as i32 + dy);
                    if (0..3).contains(&nx) && (0..3).contains(&ny) {
                        t.push((i, idx(nx as usize, ny as usize), -w));
                        d += w;
                    }
                }
                t.push((i, i, d));
            }
        }
        let a = SparseMatrix::from_triplets(9, 9, &t).unwrap();
        let g = strength_graph(&a, 0.25);
        for i in 0..9 {
            for &j in g.neighbors(i) {
                assert_eq!(i % 3, j % 3, "edge {i}-{j} is not along y");
            }
        }
        assert_eq!(g.n_edges(), 12);
    }
}
