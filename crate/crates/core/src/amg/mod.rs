//! Classical algebraic multigrid built from greedy MIS coarsening.

mod coarsen;
mod interp;
mod strength;

use std::fmt::Write as _;

use nalgebra::DMatrix;

pub use coarsen::{coarsen_mis, Splitting};
pub(crate) use coarsen::for_each_within;
pub use interp::{build_interpolation, build_interpolation_with_demotion, Interpolation};
pub use strength::{strength_graph, StrengthGraph};

use crate::dense::{sym_pinv, to_dmatrix};
use crate::error::{check_dim, Error, Result};
use crate::fsai::{build_fsai, FsaiFactor};
use crate::krylov::{MultiApply, Preconditioner};
use crate::sparse::{triple_product_rap, SparseMatrix};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SmootherKind {
    Jacobi { omega: f64 },
    /// `diag(a_ii + Σ_{j≠i} |a_ij|)⁻¹`, convergent on any SPD matrix.
    L1Jacobi,
    Fsai { pattern_power: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmgConfig {
    pub theta: f64,
    /// Distance used by the MIS coarsening on every level.
    pub coarsen_power: usize,
    pub interpolation: Interpolation,
    /// Largest number of weights kept per interpolation row.
    pub max_interp_entries: Option<usize>,
    pub smoother: SmootherKind,
    pub pre_sweeps: usize,
    pub post_sweeps: usize,
    /// Levels at or below this size are solved with a dense pseudo-inverse.
    pub coarse_size: usize,
    pub max_levels: usize,
}

impl Default for AmgConfig {
    fn default() -> Self {
        Self {
            theta: 0.25,
            coarsen_power: 1,
            interpolation: Interpolation::Distance2,
            max_interp_entries: Some(4),
            smoother: SmootherKind::Jacobi { omega: 2.0 / 3.0 },
            pre_sweeps: 1,
            post_sweeps: 1,
            coarse_size: 64,
            max_levels: 30,
        }
    }
}

impl AmgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::InvalidArgument(format!("theta must lie in [0, 1), got {}", self.theta)));
        }
        if self.coarsen_power == 0 {
            return Err(Error::InvalidArgument("coarsen_power must be at least 1".into()));
        }
        if self.max_levels == 0 {
            return Err(Error::InvalidArgument("max_levels must be at least 1".into()));
        }
        if let SmootherKind::Fsai { pattern_power: 0 } = self.smoother {
            return Err(Error::InvalidArgument("FSAI smoother needs pattern_power ≥ 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Smoother {
    /// `ω D⁻¹` or the l1 diagonal inverse.
    Jacobi(Vec<f64>),
    Fsai(FsaiFactor),
}

impl Smoother {
    pub fn build(a: &SparseMatrix, kind: SmootherKind) -> Result<Self> {
        Ok(match kind {
            SmootherKind::Jacobi { omega } => Smoother::Jacobi(
                a.diagonal()
                    .iter()
                    .map(|&d| if d != 0.0 { omega / d } else { 0.0 })
                    .collect(),
            ),
            SmootherKind::L1Jacobi => Smoother::Jacobi(
                (0..a.n_rows())
                    .map(|i| {
                        let (cols, vals) = a.row(i);
                        let d: f64 = cols
                            .iter()
                            .zip(vals)
                            .map(|(&j, &v)| if j == i { v } else { v.abs() })
                            .sum();
                        if d != 0.0 { 1.0 / d } else { 0.0 }
                    })
                    .collect(),
            ),
            // A dense singular level can leave a whole connected component
            // in one local pattern.
            SmootherKind::Fsai { pattern_power } => match build_fsai(a, pattern_power) {
                Err(Error::NotPositiveDefinite { row }) => {
                    log::debug!("FSAI smoother failed at row {row}; using l1 Jacobi");
                    Smoother::build(a, SmootherKind::L1Jacobi)?
                }
                f => Smoother::Fsai(f?),
            },
        })
    }

    /// `z = S r` for `n_vecs` stacked vectors.
    pub fn apply_multi(&self, r: &[f64], n_vecs: usize, z: &mut [f64]) {
        match self {
            Smoother::Jacobi(w) => {
                let n = w.len();
                for (zc, rc) in z.chunks_mut(n).zip(r.chunks(n)) {
                    for ((zi, ri), wi) in zc.iter_mut().zip(rc).zip(w) {
                        *zi = ri * wi;
                    }
                }
            }
            Smoother::Fsai(f) => f.apply_multi(r, n_vecs, z),
        }
    }

    pub fn stored_values(&self) -> usize {
        match self {
            Smoother::Jacobi(w) => w.len(),
            Smoother::Fsai(f) => 2 * f.g().nnz(),
        }
    }
}

#[derive(Debug, Clone)]
struct Level {
    a: SparseMatrix,
    p: SparseMatrix,
    r: SparseMatrix,
    smoother: Smoother,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoarseningStats {
    /// `n_coarse / n_fine` at the first level.
    pub coarsening_ratio: f64,
    /// Mean nonzeros per row of the first coarse operator.
    pub avg_nnzr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSummary {
    pub n: usize,
    pub nnz: usize,
    /// Size of the next level over this one; 1 on the coarsest level.
    pub ratio: f64,
    pub avg_nnzr: f64,
}

/// A fixed symmetric V-cycle: smoothing on every level except the coarsest,
/// which is solved with a dense pseudo-inverse.
#[derive(Debug, Clone)]
pub struct AmgHierarchy {
    levels: Vec<Level>,
    coarsest: SparseMatrix,
    coarsest_inverse: DMatrix<f64>,
    pre_sweeps: usize,
    post_sweeps: usize,
}

/// Largest coarsest level accepted when coarsening stops making progress.
const MAX_DENSE: usize = 6000;

pub fn setup_amg(a: &SparseMatrix, config: &AmgConfig) -> Result<AmgHierarchy> {
    config.validate()?;
    if !a.is_square() {
        return Err(Error::InvalidArgument("AMG needs a square matrix".into()));
    }
    let mut levels = Vec::new();
    let mut current = a.clone();
    while current.n_rows() > config.coarse_size && levels.len() + 1 < config.max_levels {
        let t = strength_graph(&current, config.theta);
        let mut split = coarsen_mis(&t, config.coarsen_power);
        let p = build_interpolation_with_demotion(
            &current,
            &mut split,
            &t,
            config.interpolation,
            config.max_interp_entries,
        )?;
        let nc = split.n_coarse();
        if nc == 0 || nc as f64 > 0.95 * current.n_rows() as f64 {
            log::warn!(
                "AMG coarsening stalled at level {} ({} -> {nc})",
                levels.len(),
                current.n_rows()
            );
            break;
        }
        let coarse = triple_product_rap(&p, &current)?;
        let smoother = Smoother::build(&current, config.smoother)?;
        let r = p.transpose();
        levels.push(Level {
            a: current,
            p,
            r,
            smoother,
        });
        current = coarse;
    }
    if current.n_rows() > MAX_DENSE {
        return Err(Error::InvalidArgument(format!(
            "coarsest level has {} unknowns; coarsening failed to reduce the problem",
            current.n_rows()
        )));
    }
    let coarsest_inverse = sym_pinv(&to_dmatrix(&current), 1e-12);
    Ok(AmgHierarchy {
        levels,
        coarsest: current,
        coarsest_inverse,
        pre_sweeps: config.pre_sweeps,
        post_sweeps: config.post_sweeps,
    })
}

impl AmgHierarchy {
    pub fn n(&self) -> usize {
        self.levels
            .first()
            .map_or(self.coarsest.n_rows(), |l| l.a.n_rows())
    }

    pub fn n_levels(&self) -> usize {
        self.levels.len() + 1
    }

    /// Operator of level `l`; level `n_levels() - 1` is the coarsest.
    pub fn operator(&self, l: usize) -> &SparseMatrix {
        self.levels.get(l).map_or(&self.coarsest, |lv| &lv.a)
    }

    pub fn prolongation(&self, l: usize) -> Option<&SparseMatrix> {
        self.levels.get(l).map(|lv| &lv.p)
    }

    pub fn smoother(&self, l: usize) -> Option<&Smoother> {
        self.levels.get(l).map(|lv| &lv.smoother)
    }

    pub fn coarsening_stats(&self) -> CoarseningStats {
        let a1 = self.operator(1.min(self.n_levels() - 1));
        CoarseningStats {
            coarsening_ratio: a1.n_rows() as f64 / self.n() as f64,
            avg_nnzr: a1.avg_nnz_per_row(),
        }
    }

    /// Σ nnz(A_l) / nnz(A_0).
    pub fn operator_complexity(&self) -> f64 {
        let total: usize = (0..self.n_levels()).map(|l| self.operator(l).nnz()).sum();
        total as f64 / self.operator(0).nnz().max(1) as f64
    }

    pub fn smoother_storage(&self) -> usize {
        self.levels.iter().map(|l| l.smoother.stored_values()).sum()
    }

    pub fn level_summaries(&self) -> Vec<LevelSummary> {
        (0..self.n_levels())
            .map(|l| {
                let a = self.operator(l);
                let ratio = if l + 1 < self.n_levels() {
                    self.operator(l + 1).n_rows() as f64 / a.n_rows() as f64
                } else {
                    1.0
                };
                LevelSummary {
                    n: a.n_rows(),
                    nnz: a.nnz(),
                    ratio,
                    avg_nnzr: a.avg_nnz_per_row(),
                }
            })
            .collect()
    }

    pub fn summary(&self) -> String {
        let mut out = String::from("level        n          nnz   ratio  avg_nnzr\n");
        for (l, s) in self.level_summaries().iter().enumerate() {
            let _ = writeln!(out, "{l:>5} {:>8} {:>12} {:>7.3} {:>9.2}", s.n, s.nnz, s.ratio, s.avg_nnzr);
        }
        out
    }

    /// One V-cycle applied to a single vector.
    pub fn apply_vcycle(&self, r: &[f64]) -> Result<Vec<f64>> {
        check_dim("apply_vcycle", self.n(), r.len())?;
        let mut z = vec![0.0; r.len()];
        self.cycle(0, r, 1, &mut z);
        Ok(z)
    }

    fn coarse_solve(&self, b: &[f64], n_vecs: usize, x: &mut [f64]) {
        let n = self.coarsest.n_rows();
        let bm = DMatrix::from_column_slice(n, n_vecs, b);
        let xm = &self.coarsest_inverse * bm;
        x.copy_from_slice(xm.as_slice());
    }

    fn cycle(&self, l: usize, b: &[f64], n_vecs: usize, x: &mut [f64]) {
        let Some(level) = self.levels.get(l) else {
            self.coarse_solve(b, n_vecs, x);
            return;
        };
        let len = b.len();
        let mut res = vec![0.0; len];
        let mut corr = vec![0.0; len];
        x.iter_mut().for_each(|v| *v = 0.0);
        let smooth = |x: &mut [f64], res: &mut [f64], corr: &mut [f64], first: bool| {
            if first {
                level.smoother.apply_multi(b, n_vecs, x);
                return;
            }
            level.a.spmm_into(x, n_vecs, res);
            res.iter_mut().zip(b).for_each(|(r, bi)| *r = bi - *r);
            level.smoother.apply_multi(res, n_vecs, corr);
            x.iter_mut().zip(corr.iter()).for_each(|(xi, c)| *xi += c);
        };
        for sweep in 0..self.pre_sweeps {
            smooth(x, &mut res, &mut corr, sweep == 0);
        }
        level.a.spmm_into(x, n_vecs, &mut res);
        res.iter_mut().zip(b).for_each(|(r, bi)| *r = bi - *r);
        let nc = level.p.n_cols();
        let mut rc = vec![0.0; nc * n_vecs];
        level.r.spmm_into(&res, n_vecs, &mut rc);
        let mut xc = vec![0.0; nc * n_vecs];
        self.cycle(l + 1, &rc, n_vecs, &mut xc);
        level.p.spmm_into(&xc, n_vecs, &mut corr);
        x.iter_mut().zip(corr.iter()).for_each(|(xi, c)| *xi += c);
        for _ in 0..self.post_sweeps {
            smooth(x, &mut res, &mut corr, false);
        }
    }
}

impl MultiApply for AmgHierarchy {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply_multi(&self, x: &[f64], n_vecs: usize, y: &mut [f64]) {
        self.cycle(0, x, n_vecs, y);
    }
}

impl Preconditioner for AmgHierarchy {
    fn dim(&self) -> usize {
        self.n()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.cycle(0, r, 1, z);
    }

    fn name(&self) -> String {
        "AMG".into()
    }
}

/// One hierarchy applied independently to each of `n_blocks` consecutive
/// blocks of a vector, batched through SpMM.
#[derive(Debug, Clone)]
pub struct BlockAmg<'a> {
    pub hierarchy: &'a AmgHierarchy,
    pub n_blocks: usize,
}

impl Preconditioner for BlockAmg<'_> {
    fn dim(&self) -> usize {
        self.hierarchy.n() * self.n_blocks
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.hierarchy.apply_multi(r, self.n_blocks, z);
    }

    fn name(&self) -> String {
        "AMG".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{assemble_poisson, build_stretched_grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian_1d(n: usize, shift: f64) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            let mut d = shift;
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

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn small_problem_is_direct_solve() {
        let a = laplacian_1d(20, 0.1);
        let h = setup_amg(&a, &AmgConfig::default()).unwrap();
        assert_eq!(h.n_levels(), 1);
        let r = random(20, 1);
        let z = h.apply_vcycle(&r).unwrap();
        let az = a.spmv(&z).unwrap();
        for (p, q) in az.iter().zip(&r) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn halving_on_1d() {
        let a = laplacian_1d(64, 0.0);
        let cfg = AmgConfig {
            coarse_size: 8,
            ..AmgConfig::default()
        };
        let h = setup_amg(&a, &cfg).unwrap();
        assert!(h.n_levels() >= 2);
        let ratio = h.coarsening_stats().coarsening_ratio;
        assert!((ratio - 0.5).abs() <= 0.1, "ratio {ratio}");
    }

    #[test]
    fn galerkin_and_linearity_and_symmetry() {
        let g = build_stretched_grid(12, 12, 12, [1.5; 3]).unwrap();
        let a = assemble_poisson(&g);
        for smoother in [SmootherKind::Jacobi { omega: 2.0 / 3.0 }, SmootherKind::L1Jacobi, SmootherKind::Fsai { pattern_power: 1 }] {
            let cfg = AmgConfig {
                smoother,
                ..AmgConfig::default()
            };
            let h = setup_amg(&a, &cfg).unwrap();
            assert!(h.n_levels() >= 2);
            assert!(h.operator(h.n_levels() - 1).n_rows() <= 64);
            let p = h.prolongation(0).unwrap();
            let rap = triple_product_rap(p, h.operator(0)).unwrap();
            assert_eq!(&rap, h.operator(1));
            let (r, q) = (random(a.n_rows(), 2), random(a.n_rows(), 3));
            let mr = h.apply_vcycle(&r).unwrap();
            let mq = h.apply_vcycle(&q).unwrap();
            let lhs = dot(&q, &mr);
            let rhs = dot(&r, &mq);
            assert!((lhs - rhs).abs() <= 1e-11 * lhs.abs().max(rhs.abs()), "{lhs} vs {rhs}");
            let combo: Vec<f64> = r.iter().zip(&q).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
            let mc = h.apply_vcycle(&combo).unwrap();
            let scale = mc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..mc.len() {
                assert!((mc[i] - (2.0 * mr[i] - 0.5 * mq[i])).abs() <= 1e-12 * scale);
            }
            assert!(h.apply_vcycle(&vec![0.0; a.n_rows()]).unwrap().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn multi_apply_matches_columns() {
        let a = laplacian_1d(200, 0.01);
        let h = setup_amg(&a, &AmgConfig::default()).unwrap();
        let cols: Vec<Vec<f64>> = (0..3).map(|s| random(200, s)).collect();
        let flat: Vec<f64> = cols.concat();
        let mut out = vec![0.0; 600];
        h.apply_multi(&flat, 3, &mut out);
        for (j, c) in cols.iter().enumerate() {
            let z = h.apply_vcycle(c).unwrap();
            for (p, q) in z.iter().zip(&out[j * 200..(j + 1) * 200]) {
                assert!((p - q).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn summary_lists_levels() {
        let a = laplacian_1d(300, 0.0);
        let h = setup_amg(&a, &AmgConfig::default()).unwrap();
        let text = h.summary();
        assert_eq!(text.lines().count(), h.n_levels() + 1);
        assert!(h.operator_complexity() >= 1.0);
    }
}
