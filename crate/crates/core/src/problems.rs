//! Cell-centered finite-volume Poisson problems on the stretched unit cube,
//! with the symmetry-aware orderings used by the preconditioners.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sparse::{BlockOperator, SparseMatrix};

/// Tensor-product grid with hyperbolic-tangent clustering towards the walls.
#[derive(Debug, Clone, PartialEq)]
pub struct StretchedGrid {
    dims: [usize; 3],
    gamma: [f64; 3],
    coords: [Vec<f64>; 3],
    widths: [Vec<f64>; 3],
}

impl StretchedGrid {
    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn gamma(&self) -> [f64; 3] {
        self.gamma
    }

    pub fn n_cells(&self) -> usize {
        self.dims.iter().product()
    }

    /// Node coordinates along `axis` (length `dims[axis] + 1`).
    pub fn coords(&self, axis: usize) -> &[f64] {
        &self.coords[axis]
    }

    /// Cell widths along `axis`, exactly mirrored about the midpoint.
    pub fn widths(&self, axis: usize) -> &[f64] {
        &self.widths[axis]
    }
}

fn axis_nodes(n: usize, gamma: f64) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n + 1];
    for (i, xi) in x.iter_mut().enumerate().take(n / 2 + 1) {
        let t = i as f64 / n as f64;
        *xi = if gamma == 0.0 {
            t
        } else {
            0.5 * (1.0 + (gamma * (2.0 * t - 1.0)).tanh() / gamma.tanh())
        };
    }
    for i in 0..=n / 2 {
        x[n - i] = 1.0 - x[i];
    }
    if n % 2 == 0 {
        x[n / 2] = 0.5;
    }
    x[0] = 0.0;
    x[n] = 1.0;
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        w[i] = x[i + 1] - x[i];
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Builds the grid. `gamma = 0` on an axis gives uniform spacing.
pub fn build_stretched_grid(nx: usize, ny: usize, nz: usize, gamma: [f64; 3]) -> Result<StretchedGrid> {
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::InvalidArgument(format!(
            "grid needs positive cell counts, got {nx}x{ny}x{nz}"
        )));
    }
    if gamma.iter().any(|g| !g.is_finite() || *g < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "stretching factors must be finite and non-negative, got {gamma:?}"
        )));
    }
    let dims = [nx, ny, nz];
    let (x, wx) = axis_nodes(nx, gamma[0]);
    let (y, wy) = axis_nodes(ny, gamma[1]);
    let (z, wz) = axis_nodes(nz, gamma[2]);
    Ok(StretchedGrid {
        dims,
        gamma,
        coords: [x, y, z],
        widths: [wx, wy, wz],
    })
}

/// Seven-point finite-volume Laplacian with homogeneous Neumann walls, cells
/// numbered lexicographically (x fastest). Face transmissibility is face area
/// over center distance.
pub fn assemble_poisson(grid: &StretchedGrid) -> SparseMatrix {
    assemble_widths(&grid.widths[0], &grid.widths[1], &grid.widths[2])
}

fn assemble_widths(wx: &[f64], wy: &[f64], wz: &[f64]) -> SparseMatrix {
    let (nx, ny, nz) = (wx.len(), wy.len(), wz.len());
    let n = nx * ny * nz;
    let tx = |i: usize, j: usize, k: usize| wy[j] * wz[k] / (0.5 * (wx[i] + wx[i + 1]));
    let ty = |i: usize, j: usize, k: usize| wx[i] * wz[k] / (0.5 * (wy[j] + wy[j + 1]));
    let tz = |i: usize, j: usize, k: usize| wx[i] * wy[j] / (0.5 * (wz[k] + wz[k + 1]));
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(7 * n);
    let mut vals = Vec::with_capacity(7 * n);
    offsets.push(0);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let id = i + nx * (j + ny * k);
                let xm = if i > 0 { tx(i - 1, j, k) } else { 0.0 };
                let xp = if i + 1 < nx { tx(i, j, k) } else { 0.0 };
                let ym = if j > 0 { ty(i, j - 1, k) } else { 0.0 };
                let yp = if j + 1 < ny { ty(i, j, k) } else { 0.0 };
                let zm = if k > 0 { tz(i, j, k - 1) } else { 0.0 };
                let zp = if k + 1 < nz { tz(i, j, k) } else { 0.0 };
                let diag = (xm + xp) + (ym + yp) + (zm + zp);
                let mut push = |c: usize, v: f64| {
                    cols.push(c);
                    vals.push(v);
                };
                if k > 0 {
                    push(id - nx * ny, -zm);
                }
                if j > 0 {
                    push(id - nx, -ym);
                }
                if i > 0 {
                    push(id - 1, -xm);
                }
                push(id, diag);
                if i + 1 < nx {
                    push(id + 1, -xp);
                }
                if j + 1 < ny {
                    push(id + nx, -yp);
                }
                if k + 1 < nz {
                    push(id + nx * ny, -zp);
                }
                offsets.push(cols.len());
            }
        }
    }
    SparseMatrix::new(n, n, offsets, cols, vals).expect("stencil rows are sorted")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    /// Reflection symmetries across the first `s` axes, mirrored numbering.
    Mirrored,
    /// Same operator as `Mirrored`, meant to be renumbered inner-first by
    /// [`make_inner_interface_layout`].
    InnerInterface,
    /// A chain of `n_blocks` identical grids glued along x (translational
    /// repetition, no reflection).
    Repeated { n_blocks: usize },
}

/// A Neumann Poisson operator numbered block by block so that every block
/// sees the same local numbering.
#[derive(Debug, Clone)]
pub struct SymmetricProblem {
    kind: ProblemKind,
    s: usize,
    n_blocks: usize,
    blocks: Vec<SparseMatrix>,
    ordering: Vec<usize>,
    operator: SparseMatrix,
}

impl SymmetricProblem {
    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    /// Number of reflection symmetries (0 for repeated chains).
    pub fn s(&self) -> usize {
        self.s
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn n(&self) -> usize {
        self.operator.n_rows()
    }

    pub fn block_len(&self) -> usize {
        self.n() / self.n_blocks
    }

    /// `blocks[j]` couples the base block with block `j`. For mirrored
    /// problems this is the first block row of the operator; for repeated
    /// chains it is `[isolated block, coupling to the next block, 0, ...]`.
    pub fn blocks(&self) -> &[SparseMatrix] {
        &self.blocks
    }

    /// `ordering[new] = lexicographic index`.
    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    /// Full operator in the symmetry-aware numbering.
    pub fn operator(&self) -> &SparseMatrix {
        &self.operator
    }

    pub fn is_mirrored(&self) -> bool {
        matches!(self.kind, ProblemKind::Mirrored | ProblemKind::InnerInterface)
    }

    /// The `I ⊗ blocks[0] + outer` split of the operator.
    pub fn block_operator(&self) -> BlockOperator {
        BlockOperator::from_full(&self.operator, self.blocks[0].clone(), self.n_blocks)
            .expect("blocks conform by construction")
    }

    /// Rebuilds the operator from `blocks` using the reflection pattern
    /// `H[b, c] = blocks[b xor c]`. Only meaningful for mirrored problems.
    pub fn materialize_from_blocks(&self) -> SparseMatrix {
        let m = self.block_len();
        let mut t = Vec::new();
        for b in 0..self.n_blocks {
            for c in 0..self.n_blocks {
                let blk = &self.blocks[b ^ c];
                for i in 0..m {
                    let (cols, vals) = blk.row(i);
                    for (&j, &v) in cols.iter().zip(vals) {
                        t.push((b * m + i, c * m + j, v));
                    }
                }
            }
        }
        SparseMatrix::from_triplets(self.n(), self.n(), &t).expect("in range")
    }
}

fn lex(dims: [usize; 3], i: usize, j: usize, k: usize) -> usize {
    i + dims[0] * (j + dims[1] * k)
}

/// Builds a symmetry-aware problem on `grid`.
///
/// For reflections the first `s` axes are halved; each block numbers its cells
/// lexicographically with the local index growing from the outer wall towards
/// the mirror planes. For `Repeated { n_blocks }` the grid is one block of a
/// chain along x and `s` must be 0.
pub fn make_symmetric_problem(
    grid: &StretchedGrid,
    s: usize,
    kind: ProblemKind,
) -> Result<SymmetricProblem> {
    match kind {
        ProblemKind::Repeated { n_blocks } => {
            if s != 0 {
                return Err(Error::InvalidArgument(
                    "repeated chains carry no reflection symmetries; use s = 0".into(),
                ));
            }
            make_repeated(grid, n_blocks)
        }
        _ => make_mirrored(grid, s, kind),
    }
}

fn make_mirrored(grid: &StretchedGrid, s: usize, kind: ProblemKind) -> Result<SymmetricProblem> {
    let dims = grid.dims;
    if s > 3 {
        return Err(Error::InvalidArgument(format!("at most 3 reflections, got s = {s}")));
    }
    let parts = 1usize << s;
    if (0..s).any(|a| dims[a] % 2 != 0) {
        return Err(Error::IndivisibleGrid {
            nx: dims[0],
            ny: dims[1],
            nz: dims[2],
            parts,
        });
    }
    let mut base = dims;
    for b in base.iter_mut().take(s) {
        *b /= 2;
    }
    let m = base.iter().product::<usize>();
    let mut ordering = Vec::with_capacity(m * parts);
    for blk in 0..parts {
        let flip = |axis: usize, l: usize| {
            if blk >> axis & 1 == 1 {
                dims[axis] - 1 - l
            } else {
                l
            }
        };
        for k in 0..base[2] {
            for j in 0..base[1] {
                for i in 0..base[0] {
                    ordering.push(lex(dims, flip(0, i), flip(1, j), flip(2, k)));
                }
            }
        }
    }
    let operator = assemble_poisson(grid).permute(&ordering)?;
    let rows: Vec<usize> = (0..m).collect();
    let blocks = (0..parts)
        .map(|j| {
            let cols: Vec<usize> = (j * m..(j + 1) * m).collect();
            operator.submatrix(&rows, &cols)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SymmetricProblem {
        kind,
        s,
        n_blocks: parts,
        blocks,
        ordering,
        operator,
    })
}

fn make_repeated(grid: &StretchedGrid, n_blocks: usize) -> Result<SymmetricProblem> {
    if n_blocks == 0 {
        return Err(Error::InvalidArgument("a chain needs at least one block".into()));
    }
    let dims = grid.dims;
    let wx: Vec<f64> = (0..n_blocks).flat_map(|_| grid.widths[0].iter().copied()).collect();
    let chain = assemble_widths(&wx, &grid.widths[1], &grid.widths[2]);
    let chain_dims = [dims[0] * n_blocks, dims[1], dims[2]];
    let m = grid.n_cells();
    let mut ordering = Vec::with_capacity(m * n_blocks);
    for blk in 0..n_blocks {
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    ordering.push(lex(chain_dims, blk * dims[0] + i, j, k));
                }
            }
        }
    }
    let operator = chain.permute(&ordering)?;
    let mut blocks = vec![assemble_poisson(grid)];
    if n_blocks > 1 {
        let rows: Vec<usize> = (0..m).collect();
        let cols: Vec<usize> = (m..2 * m).collect();
        blocks.push(operator.submatrix(&rows, &cols)?);
        blocks.extend((2..n_blocks).map(|_| SparseMatrix::zeros(m, m)));
    }
    Ok(SymmetricProblem {
        kind: ProblemKind::Repeated { n_blocks },
        s: 0,
        n_blocks,
        blocks,
        ordering,
        operator,
    })
}

/// Inner-first renumbering: inner unknowns of every block (block-major,
/// same local order in each block), then interface unknowns block-major.
///
/// A local index is an interface index when the corresponding unknown couples
/// to another block in at least one block. For repeated chains this marks both
/// end faces of every block, so the first and last block carry interface
/// unknowns on the outer walls that have no cross-block coupling; that keeps
/// `K` and `B` identical across blocks.
#[derive(Debug, Clone)]
pub struct InnerInterfaceLayout {
    n_blocks: usize,
    inner_local: Vec<usize>,
    interface_local: Vec<usize>,
    permutation: Vec<usize>,
    operator: SparseMatrix,
    k: SparseMatrix,
    b: SparseMatrix,
    c: SparseMatrix,
    c_blocks: Vec<SparseMatrix>,
}

impl InnerInterfaceLayout {
    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// Inner unknowns per block.
    pub fn inner_len(&self) -> usize {
        self.inner_local.len()
    }

    /// Interface unknowns per block.
    pub fn interface_len(&self) -> usize {
        self.interface_local.len()
    }

    pub fn n_inn(&self) -> usize {
        self.inner_len() * self.n_blocks
    }

    pub fn n_ifc(&self) -> usize {
        self.interface_len() * self.n_blocks
    }

    pub fn n(&self) -> usize {
        self.n_inn() + self.n_ifc()
    }

    pub fn inner_of_block(&self, b: usize) -> Range<usize> {
        b * self.inner_len()..(b + 1) * self.inner_len()
    }

    pub fn interface_range(&self) -> Range<usize> {
        self.n_inn()..self.n()
    }

    /// Local (within-block) indices of inner unknowns.
    pub fn inner_local(&self) -> &[usize] {
        &self.inner_local
    }

    pub fn interface_local(&self) -> &[usize] {
        &self.interface_local
    }

    /// Maps inner-interface positions to positions of the problem numbering.
    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }

    /// Full operator in inner-interface numbering.
    pub fn operator(&self) -> &SparseMatrix {
        &self.operator
    }

    /// Inner-inner block of one subdomain.
    pub fn k(&self) -> &SparseMatrix {
        &self.k
    }

    /// Inner-interface block of one subdomain.
    pub fn b(&self) -> &SparseMatrix {
        &self.b
    }

    /// Interface-interface block of the whole operator.
    pub fn c(&self) -> &SparseMatrix {
        &self.c
    }

    /// `c_blocks[j]` couples the interface of block 0 with that of block `j`.
    pub fn c_blocks(&self) -> &[SparseMatrix] {
        &self.c_blocks
    }

    /// Gathers a vector from problem numbering into layout numbering.
    pub fn to_layout(&self, x: &[f64]) -> Vec<f64> {
        self.permutation.iter().map(|&p| x[p]).collect()
    }

    pub fn from_layout(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; y.len()];
        for (&p, &v) in self.permutation.iter().zip(y) {
            x[p] = v;
        }
        x
    }
}

pub fn make_inner_interface_layout(problem: &SymmetricProblem) -> Result<InnerInterfaceLayout> {
    let nb = problem.n_blocks();
    let m = problem.block_len();
    let a = problem.operator();
    let mut is_ifc = vec![false; m];
    for blk in 0..nb {
        for (l, flag) in is_ifc.iter_mut().enumerate() {
            let (cols, vals) = a.row(blk * m + l);
            if cols
                .iter()
                .zip(vals)
                .any(|(&j, &v)| j / m != blk && v != 0.0)
            {
                *flag = true;
            }
        }
    }
    let inner_local: Vec<usize> = (0..m).filter(|&l| !is_ifc[l]).collect();
    let interface_local: Vec<usize> = (0..m).filter(|&l| is_ifc[l]).collect();
    let mut permutation = Vec::with_capacity(nb * m);
    for blk in 0..nb {
        permutation.extend(inner_local.iter().map(|&l| blk * m + l));
    }
    for blk in 0..nb {
        permutation.extend(interface_local.iter().map(|&l| blk * m + l));
    }
    let operator = a.permute(&permutation)?;
    let k = a.submatrix(&inner_local, &inner_local)?;
    let b = a.submatrix(&inner_local, &interface_local)?;
    let n_inn = inner_local.len() * nb;
    let ifc: Vec<usize> = (n_inn..nb * m).collect();
    let c = operator.submatrix(&ifc, &ifc)?;
    let li = interface_local.len();
    let first: Vec<usize> = (0..li).collect();
    let c_blocks = (0..nb)
        .map(|j| {
            let cols: Vec<usize> = (j * li..(j + 1) * li).collect();
            c.submatrix(&first, &cols)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InnerInterfaceLayout {
        n_blocks: nb,
        inner_local,
        interface_local,
        permutation,
        operator,
        k,
        b,
        c,
        c_blocks,
    })
}

/// Uniform random vector in [-1, 1] with its mean removed.
pub fn make_compatible_rhs(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    crate::krylov::project_nullspace_in_place(&mut b);
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(nx: usize, ny: usize, nz: usize) -> StretchedGrid {
        build_stretched_grid(nx, ny, nz, [0.0; 3]).unwrap()
    }

    #[test]
    fn midpoint_maps_to_half() {
        let g = build_stretched_grid(2, 2, 2, [1.5; 3]).unwrap();
        assert_eq!(g.coords(0), &[0.0, 0.5, 1.0]);
    }

    #[test]
    fn weak_stretching_is_nearly_uniform() {
        let g = build_stretched_grid(4, 4, 4, [1e-4; 3]).unwrap();
        for (x, e) in g.coords(0).iter().zip([0.0, 0.25, 0.5, 0.75, 1.0]) {
            assert!((x - e).abs() < 1e-6);
        }
    }

    #[test]
    fn wall_clustering() {
        let g = build_stretched_grid(64, 2, 2, [1.5; 3]).unwrap();
        let x = g.coords(0);
        assert!(x[1] - x[0] < 1.0 / 64.0);
        for i in 0..=64 {
            assert!((x[i] + x[64 - i] - 1.0).abs() < 1e-15);
        }
        assert!(x.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(build_stretched_grid(0, 2, 2, [1.0; 3]).is_err());
        assert!(build_stretched_grid(2, 2, 2, [-1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn two_cell_neumann() {
        let a = assemble_poisson(&uniform(2, 1, 1));
        let c = a.get(0, 0);
        assert!(c > 0.0);
        assert_eq!(a.to_dense(), vec![vec![c, -c], vec![-c, c]]);
    }

    #[test]
    fn interior_row_of_uniform_cube() {
        let a = assemble_poisson(&uniform(4, 4, 4));
        let id = 1 + 4 * (1 + 4);
        let (cols, vals) = a.row(id);
        assert_eq!(cols.len(), 7);
        let h = 0.25;
        for (&j, &v) in cols.iter().zip(vals) {
            let expect = if j == id { 6.0 * h } else { -h };
            assert!((v - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_row_sums_and_symmetry() {
        let a = assemble_poisson(&build_stretched_grid(6, 5, 4, [1.5; 3]).unwrap());
        let scale = a.diagonal().iter().fold(0.0f64, |m, v| m.max(*v));
        assert!(a.row_sums().iter().all(|s| s.abs() <= 1e-12 * scale));
        assert_eq!(a.symmetry_defect(), 0.0);
    }

    #[test]
    fn s0_is_identity_ordering() {
        let g = uniform(3, 3, 3);
        let p = make_symmetric_problem(&g, 0, ProblemKind::Mirrored).unwrap();
        assert_eq!(p.n_blocks(), 1);
        assert_eq!(p.ordering(), (0..27).collect::<Vec<_>>().as_slice());
        assert_eq!(p.operator(), &assemble_poisson(&g));
    }

    #[test]
    fn one_reflection_on_four_cells() {
        let p = make_symmetric_problem(&uniform(4, 1, 1), 1, ProblemKind::Mirrored).unwrap();
        let a1 = p.blocks()[0].to_dense();
        let c = a1[0][0];
        assert_eq!(a1, vec![vec![c, -c], vec![-c, 2.0 * c]]);
        let a2 = &p.blocks()[1];
        assert_eq!(a2.nnz(), 1);
        assert_eq!(a2.get(1, 1), -c);
    }

    #[test]
    fn two_reflections_follow_xor_pattern() {
        let g = build_stretched_grid(8, 8, 1, [1.5; 3]).unwrap();
        let p = make_symmetric_problem(&g, 2, ProblemKind::Mirrored).unwrap();
        assert_eq!(p.materialize_from_blocks(), *p.operator());
        let lexi = assemble_poisson(&g).permute(p.ordering()).unwrap();
        assert_eq!(lexi, *p.operator());
    }

    #[test]
    fn indivisible_grid_rejected() {
        let g = uniform(3, 4, 4);
        assert!(matches!(
            make_symmetric_problem(&g, 1, ProblemKind::Mirrored),
            Err(Error::IndivisibleGrid { .. })
        ));
    }

    #[test]
    fn outer_blocks_are_sparse() {
        let g = build_stretched_grid(16, 16, 16, [1.5; 3]).unwrap();
        for s in 1..=3 {
            let p = make_symmetric_problem(&g, s, ProblemKind::Mirrored).unwrap();
            let n1 = p.blocks()[0].nnz();
            assert!(p.blocks()[1..].iter().all(|b| b.nnz() * 10 <= n1));
        }
    }

    #[test]
    fn one_dimensional_layout() {
        let p = make_symmetric_problem(&uniform(8, 1, 1), 1, ProblemKind::InnerInterface).unwrap();
        let l = make_inner_interface_layout(&p).unwrap();
        assert_eq!((l.n_inn(), l.n_ifc()), (6, 2));
        assert_eq!(l.k().n_rows(), 3);
        assert_eq!(l.k().nnz(), 7);
        assert_eq!(l.b().nnz(), 1);
    }

    #[test]
    fn cube_interface_is_two_layers() {
        let g = build_stretched_grid(8, 8, 8, [1.5; 3]).unwrap();
        let p = make_symmetric_problem(&g, 1, ProblemKind::InnerInterface).unwrap();
        let l = make_inner_interface_layout(&p).unwrap();
        assert_eq!(l.n_ifc(), 128);
    }

    #[test]
    fn layout_blocks_reproduce_operator() {
        let g = build_stretched_grid(8, 6, 4, [1.5; 3]).unwrap();
        let p = make_symmetric_problem(&g, 2, ProblemKind::InnerInterface).unwrap();
        let l = make_inner_interface_layout(&p).unwrap();
        let inn: Vec<usize> = (0..l.n_inn()).collect();
        let ifc: Vec<usize> = l.interface_range().collect();
        let a = l.operator();
        assert_eq!(a.submatrix(&inn, &inn).unwrap(), l.k().kron_identity(4));
        assert_eq!(a.submatrix(&inn, &ifc).unwrap(), l.b().kron_identity(4));
        for i in &ifc {
            let (cols, vals) = a.row(*i);
            let blk = (*i - l.n_inn()) / l.interface_len();
            assert!(cols.iter().zip(vals).any(|(&j, &v)| {
                v != 0.0 && j >= l.n_inn() && (j - l.n_inn()) / l.interface_len() != blk
            }));
        }
    }

    #[test]
    fn repeated_chain_structure() {
        let g = build_stretched_grid(4, 3, 3, [1.5; 3]).unwrap();
        let p = make_symmetric_problem(&g, 0, ProblemKind::Repeated { n_blocks: 3 }).unwrap();
        let a = p.operator();
        assert_eq!(a.symmetry_defect(), 0.0);
        assert!(a.row_sums().iter().all(|s| s.abs() < 1e-12));
        let op = p.block_operator();
        assert_eq!(op.materialize(), *a);
        let l = make_inner_interface_layout(&p).unwrap();
        assert_eq!(l.interface_len(), 2 * 9);
        let inn: Vec<usize> = (0..l.n_inn()).collect();
        assert_eq!(
            l.operator().submatrix(&inn, &inn).unwrap(),
            l.k().kron_identity(3)
        );
    }

    #[test]
    fn rhs_is_mean_free_and_reproducible() {
        assert_eq!(make_compatible_rhs(1, 3), vec![0.0]);
        let b = make_compatible_rhs(2, 9);
        assert_eq!(b[0], -b[1]);
        let x = make_compatible_rhs(1000, 42);
        assert_eq!(x, make_compatible_rhs(1000, 42));
        assert!(x.iter().sum::<f64>().abs() <= 1e-13 * 1000.0);
    }
}
