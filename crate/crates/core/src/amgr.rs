//! Multigrid reduction on the inner-interface ordering.
//!
//! All interface unknowns are coarse; inner unknowns are thinned by an MIS on
//! the `power_k`-th power of the strength graph of one inner block, replicated
//! over the blocks. The top-level smoother is an FSAI of the single block `K`
//! applied to every block at once.

use log::warn;

use crate::amg::{
    build_interpolation_with_demotion, coarsen_mis, for_each_within, setup_amg, strength_graph, AmgConfig,
    AmgHierarchy, CoarseningStats, Interpolation, SmootherKind, Splitting,
};
use crate::error::{check_dim, Error, Result};
use crate::fsai::{build_fsai, FsaiFactor, FsaiSetupStats};
use crate::krylov::{MultiApply, Preconditioner};
use crate::problems::{InnerInterfaceLayout, SymmetricProblem};
use crate::sparse::{triple_product_rap, SparseMatrix};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReductionSplit {
    pub coarse_ids: Vec<usize>,
    pub fine_ids: Vec<usize>,
    pub power_k: usize,
    /// Fine nodes turned coarse because no coarse node was in reach.
    pub promoted: usize,
}

impl ReductionSplit {
    pub fn n(&self) -> usize {
        self.coarse_ids.len() + self.fine_ids.len()
    }

    pub fn coarsening_ratio(&self) -> f64 {
        self.coarse_ids.len() as f64 / self.n().max(1) as f64
    }

    fn from_flags(flags: &[bool], power_k: usize, promoted: usize) -> Self {
        let (c, f): (Vec<usize>, Vec<usize>) = (0..flags.len()).partition(|&i| flags[i]);
        Self {
            coarse_ids: c,
            fine_ids: f,
            power_k,
            promoted,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmgrConfig {
    pub theta: f64,
    pub power_k: usize,
    pub interpolation: Interpolation,
    pub max_interp_entries: Option<usize>,
    pub smoother_power: usize,
    pub n_smooth: usize,
    /// Configuration of the AMG solving the reduced system.
    pub amg: AmgConfig,
}

impl Default for AmgrConfig {
    fn default() -> Self {
        Self {
            theta: 0.25,
            power_k: 2,
            interpolation: Interpolation::Distance2,
            max_interp_entries: Some(4),
            smoother_power: 1,
            n_smooth: 1,
            amg: AmgConfig {
                smoother: SmootherKind::Fsai { pattern_power: 1 },
                ..AmgConfig::default()
            },
        }
    }
}

impl AmgrConfig {
    fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.power_k) {
            return Err(Error::InvalidArgument(format!("power_k must be 1, 2 or 3, got {}", self.power_k)));
        }
        if !(0.0..1.0).contains(&self.theta) {
            return Err(Error::InvalidArgument(format!("theta must lie in [0, 1), got {}", self.theta)));
        }
        if self.smoother_power == 0 {
            return Err(Error::InvalidArgument("smoother_power must be at least 1".into()));
        }
        self.amg.validate()
    }
}

/// Setup and storage spent on the top-level smoother.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SmootherCounters {
    /// Rows of the matrix the smoother was built from.
    pub rows: usize,
    pub setup: FsaiSetupStats,
    pub stored_values: usize,
}

/// C/F split of an inner-first operator: `n_blocks` inner blocks of
/// `k.n_rows()` unknowns each, then interface unknowns up to `a.n_rows()`.
///
/// The MIS runs once on `k`; uncovered fine nodes of `a` are promoted.
pub fn classify_split(a: &SparseMatrix, k: &SparseMatrix, n_blocks: usize, theta: f64, power_k: usize) -> Result<ReductionSplit> {
    if !(1..=3).contains(&power_k) {
        return Err(Error::InvalidArgument(format!("power_k must be 1, 2 or 3, got {power_k}")));
    }
    let n = a.n_rows();
    let m = k.n_rows();
    if n < m * n_blocks {
        return Err(Error::DimensionMismatch {
            op: "classify_split",
            expected: m * n_blocks,
            got: n,
        });
    }
    let base = coarsen_mis(&strength_graph(k, theta), power_k);
    let mut flags = vec![true; n];
    for blk in 0..n_blocks {
        flags[blk * m..(blk + 1) * m].copy_from_slice(base.flags());
    }
    let t = strength_graph(a, theta);
    let mut stamp = vec![usize::MAX; n];
    let mut frontier = Vec::new();
    let mut uncovered = Vec::new();
    for i in 0..n {
        if flags[i] {
            continue;
        }
        let mut found = false;
        for_each_within(&t, i, power_k, &mut stamp, i, &mut frontier, |v| found |= flags[v]);
        if !found {
            uncovered.push(i);
        }
    }
    if !uncovered.is_empty() {
        warn!("{} fine nodes have no coarse node within distance {power_k}; promoting", uncovered.len());
        for &i in &uncovered {
            flags[i] = true;
        }
    }
    Ok(ReductionSplit::from_flags(&flags, power_k, uncovered.len()))
}

pub fn classify_fc(layout: &InnerInterfaceLayout, theta: f64, power_k: usize) -> Result<ReductionSplit> {
    classify_split(layout.operator(), layout.k(), layout.n_blocks(), theta, power_k)
}

#[derive(Debug, Clone)]
pub struct AmgrPrecond {
    split: ReductionSplit,
    a: SparseMatrix,
    p: SparseMatrix,
    r: SparseMatrix,
    a_c: SparseMatrix,
    coarse: AmgHierarchy,
    smoother: FsaiFactor,
    n_blocks: usize,
    n_smooth: usize,
    /// Maps layout positions to problem positions; `None` when they agree.
    permutation: Option<Vec<usize>>,
}

/// Builds the reduction from an inner-first operator (see [`classify_split`]).
pub fn build_reduction(a: &SparseMatrix, k: &SparseMatrix, n_blocks: usize, cfg: &AmgrConfig) -> Result<AmgrPrecond> {
    cfg.validate()?;
    let split = classify_split(a, k, n_blocks, cfg.theta, cfg.power_k)?;
    let mut flags = vec![false; a.n_rows()];
    split.coarse_ids.iter().for_each(|&i| flags[i] = true);
    let mut splitting = Splitting::from_flags(flags);
    let t = strength_graph(a, cfg.theta);
    let p = build_interpolation_with_demotion(a, &mut splitting, &t, cfg.interpolation, cfg.max_interp_entries)?;
    let demoted = splitting.n_coarse() - split.coarse_ids.len();
    if demoted > 0 {
        warn!("{demoted} fine nodes became coarse during interpolation");
    }
    let split = ReductionSplit::from_flags(splitting.flags(), cfg.power_k, split.promoted + demoted);
    let a_c = triple_product_rap(&p, a)?;
    let coarse = setup_amg(&a_c, &cfg.amg)?;
    let smoother = build_fsai(k, cfg.smoother_power)?;
    Ok(AmgrPrecond {
        split,
        r: p.transpose(),
        a: a.clone(),
        p,
        a_c,
        coarse,
        smoother,
        n_blocks,
        n_smooth: cfg.n_smooth,
        permutation: None,
    })
}

pub fn build_amgr(problem: &SymmetricProblem, layout: &InnerInterfaceLayout, cfg: &AmgrConfig) -> Result<AmgrPrecond> {
    if layout.n_blocks() != problem.n_blocks() {
        return Err(Error::InvalidArgument("layout does not belong to the problem".into()));
    }
    check_dim("build_amgr", problem.n(), layout.n())?;
    let mut m = build_reduction(layout.operator(), layout.k(), layout.n_blocks(), cfg)?;
    m.permutation = Some(layout.permutation().to_vec());
    Ok(m)
}

impl AmgrPrecond {
    pub fn split(&self) -> &ReductionSplit {
        &self.split
    }

    pub fn prolongation(&self) -> &SparseMatrix {
        &self.p
    }

    pub fn coarse_operator(&self) -> &SparseMatrix {
        &self.a_c
    }

    pub fn coarse_solver(&self) -> &AmgHierarchy {
        &self.coarse
    }

    pub fn smoother(&self) -> &FsaiFactor {
        &self.smoother
    }

    pub fn stats(&self) -> CoarseningStats {
        CoarseningStats {
            coarsening_ratio: self.split.coarsening_ratio(),
            avg_nnzr: self.a_c.nnz() as f64 / self.a_c.n_rows().max(1) as f64,
        }
    }

    pub fn smoother_counters(&self) -> SmootherCounters {
        SmootherCounters {
            rows: self.smoother.dim(),
            setup: self.smoother.setup_stats(),
            stored_values: 2 * self.smoother.g().nnz(),
        }
    }

    fn n_inner(&self) -> usize {
        self.smoother.dim() * self.n_blocks
    }

    /// `x_I += S (b − A x)_I` over the inner unknowns.
    fn smooth(&self, b: &[f64], x: &mut [f64], res: &mut [f64], corr: &mut [f64]) {
        let ni = self.n_inner();
        self.a.spmv_into(x, res);
        res.iter_mut().zip(b).for_each(|(r, bi)| *r = bi - *r);
        self.smoother.apply_multi(&res[..ni], self.n_blocks, &mut corr[..ni]);
        x[..ni].iter_mut().zip(&corr[..ni]).for_each(|(xi, c)| *xi += c);
    }

    /// One reduction cycle in inner-interface numbering.
    pub fn apply_layout(&self, b: &[f64], x: &mut [f64]) {
        let n = b.len();
        let mut res = vec![0.0; n];
        let mut corr = vec![0.0; n];
        x.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..self.n_smooth {
            self.smooth(b, x, &mut res, &mut corr);
        }
        self.a.spmv_into(x, &mut res);
        res.iter_mut().zip(b).for_each(|(r, bi)| *r = bi - *r);
        let rc = self.r.spmv(&res).expect("conforming");
        let mut xc = vec![0.0; rc.len()];
        self.coarse.apply_multi(&rc, 1, &mut xc);
        self.p.spmv_into(&xc, &mut corr);
        x.iter_mut().zip(&corr).for_each(|(xi, c)| *xi += c);
        for _ in 0..self.n_smooth {
            self.smooth(b, x, &mut res, &mut corr);
        }
    }
}

impl Preconditioner for AmgrPrecond {
    fn dim(&self) -> usize {
        self.a.n_rows()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        match &self.permutation {
            None => self.apply_layout(r, z),
            Some(perm) => {
                let rl: Vec<f64> = perm.iter().map(|&p| r[p]).collect();
                let mut zl = vec![0.0; rl.len()];
                self.apply_layout(&rl, &mut zl);
                for (&p, &v) in perm.iter().zip(&zl) {
                    z[p] = v;
                }
            }
        }
    }

    fn name(&self) -> String {
        "AMGR".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::ProblemKind;
    use crate::krylov::{solve, KrylovConfig};
    use crate::problems::{build_stretched_grid, make_compatible_rhs, make_inner_interface_layout, make_symmetric_problem};
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    fn from_triplets(n: usize, t: &[(usize, usize, f64)]) -> SparseMatrix {
        SparseMatrix::from_triplets(n, n, t).unwrap()
    }

    /// Path Laplacian with Neumann ends.
    fn path(n: usize) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n - 1 {
            t.extend([(i, i, 1.0), (i + 1, i + 1, 1.0), (i, i + 1, -1.0), (i + 1, i, -1.0)]);
        }
        from_triplets(n, &t)
    }

    /// Chain `0-1-2 | 6 | 5-4-3`: two mirrored blocks of three inner nodes
    /// joined through one interface node.
    fn chain7() -> (SparseMatrix, SparseMatrix) {
        let edges = [(0, 1), (1, 2), (2, 6), (3, 4), (4, 5), (5, 6)];
        let mut t = Vec::new();
        for (i, j) in edges {
            t.extend([(i, i, 1.0), (j, j, 1.0), (i, j, -1.0), (j, i, -1.0)]);
        }
        t.extend([(0, 0, 1.0), (3, 3, 1.0)]);
        let a = from_triplets(7, &t);
        let k = a.submatrix(&[0, 1, 2], &[0, 1, 2]).unwrap();
        (a, k)
    }

    #[test]
    fn chain_of_seven() {
        let (a, k) = chain7();
        let s = classify_split(&a, &k, 2, 0.25, 2).unwrap();
        assert_eq!(s.coarse_ids, vec![0, 3, 6]);
        assert!((s.coarsening_ratio() - 3.0 / 7.0).abs() < 1e-15);
        assert_eq!(s.promoted, 0);
    }

    #[test]
    fn distance_one_on_a_path_alternates() {
        let k = path(5);
        let s = classify_split(&k, &k, 1, 0.25, 1).unwrap();
        assert_eq!(s.coarse_ids, vec![0, 2, 4]);
    }

    #[test]
    fn all_interface_gives_identity() {
        let a = path(6);
        let k = SparseMatrix::zeros(0, 0);
        let m = build_reduction(&a, &k, 2, &AmgrConfig::default()).unwrap();
        assert_eq!(m.split().fine_ids.len(), 0);
        assert_eq!(m.prolongation(), &SparseMatrix::identity(6));
        let shifted = a.add_scaled(1.0, &SparseMatrix::identity(6)).unwrap();
        let m = build_reduction(&shifted, &k, 2, &AmgrConfig::default()).unwrap();
        let r = random_vec(6, 1);
        let mut z = vec![0.0; 6];
        m.apply(&r, &mut z);
        let az = shifted.spmv(&z).unwrap();
        for i in 0..6 {
            assert!((az[i] - r[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn invalid_power_is_rejected() {
        let (a, k) = chain7();
        assert!(classify_split(&a, &k, 2, 0.25, 0).is_err());
        assert!(classify_split(&a, &k, 2, 0.25, 4).is_err());
    }

    fn mirrored(n: usize, s: usize) -> (SymmetricProblem, InnerInterfaceLayout) {
        let g = build_stretched_grid(n, n, n, [1.5; 3]).unwrap();
        let p = make_symmetric_problem(&g, s, ProblemKind::Mirrored).unwrap();
        let l = make_inner_interface_layout(&p).unwrap();
        (p, l)
    }

    #[test]
    fn structure_invariants() {
        let (p, l) = mirrored(8, 1);
        let m = build_amgr(&p, &l, &AmgrConfig::default()).unwrap();
        let s = m.split();
        for i in l.interface_range() {
            assert!(s.coarse_ids.binary_search(&i).is_ok());
        }
        let cmap: Vec<Option<usize>> = {
            let mut v = vec![None; l.n()];
            s.coarse_ids.iter().enumerate().for_each(|(c, &i)| v[i] = Some(c));
            v
        };
        for (i, c) in cmap.iter().enumerate() {
            if let Some(c) = c {
                let (cols, vals) = m.prolongation().row(i);
                assert_eq!((cols, vals), (&[*c][..], &[1.0][..]));
            }
        }
        let rap = triple_product_rap(m.prolongation(), l.operator()).unwrap();
        assert_eq!(&rap, m.coarse_operator());
        assert_eq!(m.smoother_counters().rows, l.inner_len());
    }

    #[test]
    fn linear_and_symmetric() {
        let (p, l) = mirrored(16, 1);
        let m = build_amgr(&p, &l, &AmgrConfig::default()).unwrap();
        let n = p.n();
        let ap = |x: &[f64]| {
            let mut z = vec![0.0; n];
            m.apply(x, &mut z);
            z
        };
        let (r, q) = (random_vec(n, 2), random_vec(n, 3));
        let mix: Vec<f64> = r.iter().zip(&q).map(|(a, b)| 2.0 * a - 0.3 * b).collect();
        let (zr, zq, zm) = (ap(&r), ap(&q), ap(&mix));
        let norm = |v: &[f64]| dot(v, v).sqrt();
        for i in 0..n {
            assert!((zm[i] - 2.0 * zr[i] + 0.3 * zq[i]).abs() <= 1e-12 * norm(&zm));
        }
        let asym = (dot(&r, &zq) - dot(&q, &zr)).abs();
        assert!(asym <= 1e-10 * norm(&zr) * norm(&q), "{asym}");
        assert_eq!(ap(&vec![0.0; n]), vec![0.0; n]);
    }

    #[test]
    fn single_block_is_two_level() {
        let (p, l) = mirrored(8, 0);
        assert_eq!(l.interface_len(), 0);
        let m = build_amgr(&p, &l, &AmgrConfig::default()).unwrap();
        let b = make_compatible_rhs(p.n(), 1);
        let (_, st) = solve(p.operator(), &m, &b, &KrylovConfig::default()).unwrap();
        assert!(st.converged);
    }

    #[test]
    fn interface_order_does_not_matter() {
        let (_, l) = mirrored(12, 2);
        let a = l.operator();
        let b = make_compatible_rhs(a.n_rows(), 5);
        let base = build_reduction(a, l.k(), l.n_blocks(), &AmgrConfig::default()).unwrap();
        let (_, st0) = solve(a, &base, &b, &KrylovConfig::default()).unwrap();
        let mut perm: Vec<usize> = (0..a.n_rows()).collect();
        perm[l.n_inn()..].shuffle(&mut ChaCha8Rng::seed_from_u64(9));
        let ap = a.permute(&perm).unwrap();
        let bp: Vec<f64> = perm.iter().map(|&i| b[i]).collect();
        let m = build_reduction(&ap, l.k(), l.n_blocks(), &AmgrConfig::default()).unwrap();
        let (_, st1) = solve(&ap, &m, &bp, &KrylovConfig::default()).unwrap();
        assert!(st0.iterations.abs_diff(st1.iterations) <= 1, "{} vs {}", st0.iterations, st1.iterations);
    }
}
