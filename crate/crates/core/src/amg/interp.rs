use rayon::prelude::*;

use super::coarsen::Splitting;
use super::strength::StrengthGraph;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interpolation {
    /// Classical direct interpolation from strong coarse neighbors.
    Direct,
    /// Extended+i: also reaches the strong coarse neighbors of strong fine
    /// neighbors.
    Distance2,
}

impl Interpolation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Interpolation::Direct => "direct",
            Interpolation::Distance2 => "distance2",
        }
    }
}

/// Builds the prolongation `P` (n × n_coarse). Coarse rows are unit rows.
///
/// `max_entries` keeps only the largest weights of each fine row, rescaled so
/// the row sum is unchanged.
pub fn build_interpolation(
    a: &SparseMatrix,
    split: &Splitting,
    t: &StrengthGraph,
    scheme: Interpolation,
    max_entries: Option<usize>,
) -> Result<SparseMatrix> {
    let n = a.n_rows();
    if split.len() != n || t.n() != n {
        return Err(Error::DimensionMismatch {
            op: "build_interpolation",
            expected: n,
            got: split.len(),
        });
    }
    let cmap = split.coarse_map();
    let nc = split.n_coarse();
    let rows: Vec<Vec<(usize, f64)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            if let Some(c) = cmap[i] {
                return Ok(vec![(c, 1.0)]);
            }
            let mut w = match scheme {
                Interpolation::Direct => direct_row(a, split, t, i)?,
                Interpolation::Distance2 => ext_i_row(a, split, t, i)?,
            };
            if let Some(m) = max_entries {
                truncate(&mut w, m);
            }
            let mut row: Vec<(usize, f64)> = w
                .into_iter()
                .map(|(j, v)| (cmap[j].expect("coarse"), v))
                .collect();
            row.sort_unstable_by_key(|e| e.0);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for row in rows {
        for (c, v) in row {
            cols.push(c);
            vals.push(v);
        }
        offsets.push(cols.len());
    }
    SparseMatrix::new(n, nc, offsets, cols, vals)
}

/// Builds `P`, turning every fine node without an interpolation source into
/// a coarse node until all rows can be formed.
pub fn build_interpolation_with_demotion(
    a: &SparseMatrix,
    split: &mut Splitting,
    t: &StrengthGraph,
    scheme: Interpolation,
    max_entries: Option<usize>,
) -> Result<SparseMatrix> {
    loop {
        match build_interpolation(a, split, t, scheme, max_entries) {
            Err(Error::NoInterpolationSource { node }) => {
                log::debug!("demoting node {node} to coarse");
                for i in orphans(a, split, t, scheme) {
                    split.set_coarse(i);
                }
                debug_assert!(split.is_coarse(node));
            }
            other => return other,
        }
    }
}

fn orphans(a: &SparseMatrix, split: &Splitting, t: &StrengthGraph, scheme: Interpolation) -> Vec<usize> {
    (0..a.n_rows())
        .filter(|&i| !split.is_coarse(i))
        .filter(|&i| match scheme {
            Interpolation::Direct => direct_row(a, split, t, i).is_err(),
            Interpolation::Distance2 => ext_i_row(a, split, t, i).is_err(),
        })
        .collect()
}

fn diag_of(a: &SparseMatrix, i: usize) -> f64 {
    a.get(i, i)
}

/// Weights indexed by fine-level column.
fn direct_row(a: &SparseMatrix, split: &Splitting, t: &StrengthGraph, i: usize) -> Result<Vec<(usize, f64)>> {
    let (cols, vals) = a.row(i);
    let mut diag = 0.0;
    let (mut neg_all, mut pos_all, mut neg_c, mut pos_c) = (0.0, 0.0, 0.0, 0.0);
    let mut sources = Vec::new();
    for (&j, &v) in cols.iter().zip(vals) {
        if j == i {
            diag = v;
            continue;
        }
        if v < 0.0 {
            neg_all += v;
        } else {
            pos_all += v;
        }
        if split.is_coarse(j) && t.is_strong(i, j) && v != 0.0 {
            if v < 0.0 {
                neg_c += v;
            } else {
                pos_c += v;
            }
            sources.push((j, v));
        }
    }
    if sources.is_empty() {
        return Err(Error::NoInterpolationSource { node: i });
    }
    let alpha = if neg_c != 0.0 {
        neg_all / neg_c
    } else {
        diag += neg_all;
        0.0
    };
    let beta = if pos_c != 0.0 {
        pos_all / pos_c
    } else {
        diag += pos_all;
        0.0
    };
    if diag == 0.0 {
        return Err(Error::NoInterpolationSource { node: i });
    }
    Ok(sources
        .into_iter()
        .map(|(j, v)| (j, -(if v < 0.0 { alpha } else { beta }) * v / diag))
        .filter(|&(_, w)| w != 0.0)
        .collect())
}

fn ext_i_row(a: &SparseMatrix, split: &Splitting, t: &StrengthGraph, i: usize) -> Result<Vec<(usize, f64)>> {
    let strong_fine: Vec<usize> = t
        .neighbors(i)
        .iter()
        .copied()
        .filter(|&k| !split.is_coarse(k))
        .collect();
    let mut chat: Vec<usize> = t
        .neighbors(i)
        .iter()
        .copied()
        .filter(|&j| split.is_coarse(j))
        .collect();
    for &k in &strong_fine {
        chat.extend(t.neighbors(k).iter().copied().filter(|&j| split.is_coarse(j)));
    }
    chat.sort_unstable();
    chat.dedup();
    if chat.is_empty() {
        return Err(Error::NoInterpolationSource { node: i });
    }
    let slot = |j: usize| chat.binary_search(&j).ok();
    let mut num = vec![0.0; chat.len()];
    let (cols, vals) = a.row(i);
    let mut diag = 0.0;
    for (&j, &v) in cols.iter().zip(vals) {
        if j == i {
            diag += v;
        } else if let Some(p) = slot(j) {
            num[p] += v;
        } else if !split.is_coarse(j) && t.is_strong(i, j) {
            let (kc, kv) = a.row(j);
            let kdiag = diag_of(a, j);
            let bar = |x: f64| if x * kdiag < 0.0 { x } else { 0.0 };
            let d: f64 = kc
                .iter()
                .zip(kv)
                .filter(|(&l, _)| l == i || slot(l).is_some())
                .map(|(_, &x)| bar(x))
                .sum();
            if d == 0.0 {
                diag += v;
                continue;
            }
            for (&l, &x) in kc.iter().zip(kv) {
                let x = bar(x);
                if x == 0.0 {
                    continue;
                }
                if l == i {
                    diag += v * x / d;
                } else if let Some(p) = slot(l) {
                    num[p] += v * x / d;
                }
            }
        } else {
            diag += v;
        }
    }
    if diag == 0.0 || !diag.is_finite() {
        return Err(Error::NoInterpolationSource { node: i });
    }
    Ok(chat
        .iter()
        .zip(num)
        .map(|(&j, v)| (j, -v / diag))
        .filter(|&(_, w)| w != 0.0)
        .collect())
}

fn truncate(w: &mut Vec<(usize, f64)>, max_entries: usize) {
    if w.len() <= max_entries || max_entries == 0 {
        return;
    }
    let before: f64 = w.iter().map(|e| e.1).sum();
    w.sort_by(|p, q| q.1.abs().total_cmp(&p.1.abs()).then(p.0.cmp(&q.0)));
    w.truncate(max_entries);
    let after: f64 = w.iter().map(|e| e.1).sum();
    if after != 0.0 {
        let s = before / after;
        w.iter_mut().for_each(|e| e.1 *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::amg::coarsen::coarsen_mis;
    use crate::amg::strength::strength_graph;
    use crate::problems::{assemble_poisson, build_stretched_grid};

    fn neumann_1d(n: usize) -> SparseMatrix {
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
        SparseMatrix::from_triplets(n, n, &t).unwrap()
    }

    #[test]
    fn all_coarse_gives_identity() {
        let a = neumann_1d(5);
        let t = strength_graph(&a, 0.25);
        for scheme in [Interpolation::Direct, Interpolation::Distance2] {
            let p = build_interpolation(&a, &Splitting::all_coarse(5), &t, scheme, None).unwrap();
            assert_eq!(p, SparseMatrix::identity(5));
        }
    }

    #[test]
    fn halving_1d() {
        let a = neumann_1d(7);
        let t = strength_graph(&a, 0.25);
        let split = Splitting::from_flags((0..7).map(|i| i % 2 == 0).collect());
        let p = build_interpolation(&a, &split, &t, Interpolation::Direct, None).unwrap();
        assert_eq!(p.n_cols(), 4);
        for i in [1, 3, 5] {
            let (c, v) = p.row(i);
            assert_eq!(c, &[i / 2, i / 2 + 1]);
            assert!(v.iter().all(|w| (w - 0.5).abs() < 1e-15));
        }
    }

    #[test]
    fn rows_sum_to_one_on_neumann_grid() {
        let g = build_stretched_grid(6, 5, 4, [1.5, 1.5, 1.5]).unwrap();
        let a = assemble_poisson(&g);
        let t = strength_graph(&a, 0.25);
        for (scheme, power) in [(Interpolation::Direct, 1), (Interpolation::Distance2, 1), (Interpolation::Distance2, 2)] {
            let mut split = coarsen_mis(&t, power);
            let p = build_interpolation_with_demotion(&a, &mut split, &t, scheme, None).unwrap();
            for s in p.row_sums() {
                assert!((s - 1.0).abs() < 1e-12, "{scheme:?} row sum {s}");
            }
        }
    }

    #[test]
    fn missing_source_is_reported() {
        let a = neumann_1d(5);
        let t = strength_graph(&a, 0.25);
        let split = Splitting::from_flags(vec![true, false, false, false, false]);
        let err = build_interpolation(&a, &split, &t, Interpolation::Direct, None).unwrap_err();
        assert!(matches!(err, Error::NoInterpolationSource { node: 2 }));
        let mut split = split;
        let p = build_interpolation_with_demotion(&a, &mut split, &t, Interpolation::Distance2, None).unwrap();
        assert!(split.n_coarse() > 1);
        assert_eq!(p.n_cols(), split.n_coarse());
    }

    #[test]
    fn truncation_keeps_row_sum() {
        let mut w = vec![(0, 0.5), (1, 0.1), (2, 0.3), (3, 0.1)];
        truncate(&mut w, 2);
        assert_eq!(w.len(), 2);
        let s: f64 = w.iter().map(|e| e.1).sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(w[0].0, 0);
        assert_eq!(w[1].0, 2);
    }
}
