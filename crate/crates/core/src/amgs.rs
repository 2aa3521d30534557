//! Schur-complement preconditioner on the inner-interface ordering
//! `A = [K̄ B̄; B̄ᵀ C̄]` with `K̄ = I ⊗ K`, `B̄ = I ⊗ B`.
//!
//! The inner block is handled by one AMG hierarchy of `K` applied to all
//! blocks at once; the interface block by an FSAI of an explicit sparse
//! Schur approximation, low-rank corrected per decoupled interface block.

use log::warn;
use rayon::prelude::*;

use crate::amg::{setup_amg, AmgConfig, AmgHierarchy};
use crate::eigen::{smallest_eigs_sym, EigOptions};
use crate::error::{check_dim, Error, Result};
use crate::fsai::{build_fsai, FsaiFactor};
use crate::krylov::{FnOperator, MultiApply, Preconditioner};
use crate::lowrank::{fsai_theta, FsaiCorrection};
use crate::problems::{InnerInterfaceLayout, SymmetricProblem};
use crate::sparse::{spgemm, SparseMatrix};
use crate::symmetry::{extract_subsystems, is_zero_row_sum, SubsystemSet, SymmetryBasis};
use crate::vecops::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct AmgsConfig {
    /// Eigenpairs per interface block.
    pub rank: usize,
    /// Relative drop tolerance for the explicit Schur approximation.
    pub drop_tol: f64,
    pub k_fsai_power: usize,
    pub schur_fsai_power: usize,
    pub amg: AmgConfig,
    pub eig: EigOptions,
}

impl Default for AmgsConfig {
    fn default() -> Self {
        Self {
            rank: 16,
            drop_tol: 1e-3,
            k_fsai_power: 1,
            schur_fsai_power: 1,
            amg: AmgConfig::default(),
            eig: EigOptions::default(),
        }
    }
}

/// `C₁ − Bᵀ Gᵀ G B` with entries below `drop_tol · max|entry|` removed,
/// symmetrized.
pub fn approximate_schur(layout: &InnerInterfaceLayout, fsai_k: &FsaiFactor, drop_tol: f64) -> Result<SparseMatrix> {
    let li = layout.interface_len();
    if li == 0 {
        return Ok(SparseMatrix::zeros(0, 0));
    }
    check_dim("approximate_schur", layout.inner_len(), fsai_k.dim())?;
    let gb = spgemm(fsai_k.g(), layout.b())?;
    let btgtgb = spgemm(&gb.transpose(), &gb)?;
    let s = layout.c_blocks()[0].add_scaled(-1.0, &btgtgb)?;
    let cut = drop_tol * s.max_abs();
    let s = s.filter(|i, j, v| i == j || v.abs() > cut);
    let sym = s.add_scaled(1.0, &s.transpose())?;
    Ok(sym.scale(0.5))
}

/// Interface part of the preconditioner; absent when there is no interface.
struct InterfaceSolver {
    schur_fsai: FsaiFactor,
    corrections: Vec<FsaiCorrection>,
    basis: SymmetryBasis,
}

pub struct SchurPrecond {
    layout: InnerInterfaceLayout,
    amg_k: AmgHierarchy,
    fsai_k: FsaiFactor,
    bt: SparseMatrix,
    s1_approx: SparseMatrix,
    interface: Option<InterfaceSolver>,
    rank: usize,
}

/// `Ŝ_AMG,i x = Ĉ_i x − Bᵀ M_K B x`, where `Ĉ_i` is the `i`-th decoupled
/// interface block.
fn schur_amg_apply(c_hat: &SparseMatrix, b: &SparseMatrix, bt: &SparseMatrix, m_k: &AmgHierarchy, x: &[f64], y: &mut [f64]) {
    let bx = b.spmv(x).expect("conforming");
    let mut t = vec![0.0; bx.len()];
    m_k.apply_multi(&bx, 1, &mut t);
    c_hat.spmv_into(x, y);
    bt.spmv_add(-1.0, &t, y);
}

pub fn build_amgs(problem: &SymmetricProblem, layout: &InnerInterfaceLayout, cfg: &AmgsConfig) -> Result<SchurPrecond> {
    if !problem.is_mirrored() {
        return Err(Error::InvalidArgument("AMGS needs a mirrored problem".into()));
    }
    check_dim("build_amgs", problem.n(), layout.n())?;
    cfg.amg.validate()?;
    let k = layout.k();
    let amg_k = setup_amg(k, &cfg.amg)?;
    let fsai_k = build_fsai(k, cfg.k_fsai_power)?;
    let bt = layout.b().transpose();
    let s1_approx = approximate_schur(layout, &fsai_k, cfg.drop_tol)?;
    let interface = if layout.interface_len() == 0 {
        None
    } else {
        let schur_fsai = build_fsai(&s1_approx, cfg.schur_fsai_power)?;
        let c_hat: SubsystemSet = extract_subsystems(layout.c_blocks())?;
        let singular = is_zero_row_sum(problem.operator());
        let li = layout.interface_len();
        let corrections = (0..c_hat.len())
            .into_par_iter()
            .map(|i| {
                if cfg.rank == 0 {
                    return Ok(FsaiCorrection {
                        eig_converged: true,
                        ..Default::default()
                    });
                }
                let ci = &c_hat.subsystems()[i];
                let (g, gt) = (schur_fsai.g(), schur_fsai.g_transpose());
                let (b, btr, mk) = (layout.b(), &bt, &amg_k);
                let x = FnOperator::new(li, |v: &[f64], y: &mut [f64]| {
                    let t = gt.spmv(v).expect("conforming");
                    let mut u = vec![0.0; li];
                    schur_amg_apply(ci, b, btr, mk, &t, &mut u);
                    g.spmv_into(&u, y);
                });
                let mut opts = cfg.eig.clone();
                // The exact Schur complement of the symmetric block inherits
                // the constant null vector of a pure Neumann operator.
                if singular && i == 0 {
                    opts.deflate.push(schur_fsai.solve_transpose(&vec![1.0; li])?);
                }
                let pairs = smallest_eigs_sym(&x, cfg.rank, &opts)?;
                if !pairs.converged {
                    warn!("Schur eigen-solve of interface block {i} did not reach tolerance");
                }
                let z = pairs
                    .vectors
                    .iter()
                    .map(|v| gt.spmv(v))
                    .collect::<Result<Vec<_>>>()?;
                let theta = pairs.values.iter().map(|&l| fsai_theta(l)).collect();
                Ok(FsaiCorrection {
                    eigenvalues: pairs.values,
                    z,
                    theta,
                    eig_converged: pairs.converged,
                })
            })
            .collect::<Result<_>>()?;
        Some(InterfaceSolver {
            schur_fsai,
            corrections,
            basis: SymmetryBasis::new(problem.s(), layout.n_ifc())?,
        })
    };
    Ok(SchurPrecond {
        layout: layout.clone(),
        amg_k,
        fsai_k,
        bt,
        s1_approx,
        interface,
        rank: cfg.rank,
    })
}

impl SchurPrecond {
    pub fn layout(&self) -> &InnerInterfaceLayout {
        &self.layout
    }

    pub fn amg_k(&self) -> &AmgHierarchy {
        &self.amg_k
    }

    pub fn fsai_k(&self) -> &FsaiFactor {
        &self.fsai_k
    }

    pub fn s1_approx(&self) -> &SparseMatrix {
        &self.s1_approx
    }

    pub fn schur_fsai(&self) -> Option<&FsaiFactor> {
        self.interface.as_ref().map(|s| &s.schur_fsai)
    }

    pub fn correction(&self, i: usize) -> Option<&FsaiCorrection> {
        self.interface.as_ref().map(|s| &s.corrections[i])
    }

    pub fn eig_converged(&self) -> bool {
        self.interface
            .as_ref()
            .is_none_or(|s| s.corrections.iter().all(|c| c.eig_converged))
    }

    /// `Ŝ_AMG` of interface block `i` applied to `x`.
    pub fn schur_amg_apply(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("schur_amg_apply", self.layout.interface_len(), x.len())?;
        let c_hat = extract_subsystems(self.layout.c_blocks())?;
        let mut y = vec![0.0; x.len()];
        schur_amg_apply(&c_hat.subsystems()[i], self.layout.b(), &self.bt, &self.amg_k, x, &mut y);
        Ok(y)
    }

    /// Applies the preconditioner in inner-interface numbering.
    pub fn apply_layout(&self, r: &[f64], z: &mut [f64]) {
        let nb = self.layout.n_blocks();
        let n_inn = self.layout.n_inn();
        let (r_k, r_s) = r.split_at(n_inn);
        let (z_k, z_s) = z.split_at_mut(n_inn);
        self.amg_k.apply_multi(r_k, nb, z_k);
        let Some(ifc) = &self.interface else {
            return;
        };
        let mut y_s = r_s.to_vec();
        let mut t = vec![0.0; y_s.len()];
        self.bt.spmm_into(z_k, nb, &mut t);
        y_s.iter_mut().zip(&t).for_each(|(y, ti)| *y -= ti);
        ifc.basis.apply_in_place(&mut y_s);
        ifc.schur_fsai.apply_multi(&y_s, nb, z_s);
        let li = self.layout.interface_len();
        z_s.par_chunks_mut(li)
            .zip(y_s.par_chunks(li))
            .zip(&ifc.corrections)
            .for_each(|((zi, yi), c)| {
                for (zc, &th) in c.z.iter().zip(&c.theta) {
                    let a = th * dot(zc, yi);
                    zi.iter_mut().zip(zc).for_each(|(p, q)| *p += a * q);
                }
            });
        ifc.basis.apply_in_place(z_s);
        let mut bx = vec![0.0; n_inn];
        self.layout.b().spmm_into(z_s, nb, &mut bx);
        let mut gbx = vec![0.0; n_inn];
        self.fsai_k.apply_multi(&bx, nb, &mut gbx);
        z_k.iter_mut().zip(&gbx).for_each(|(p, q)| *p -= q);
    }
}

impl Preconditioner for SchurPrecond {
    fn dim(&self) -> usize {
        self.layout.n()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let rl = self.layout.to_layout(r);
        let mut zl = vec![0.0; rl.len()];
        self.apply_layout(&rl, &mut zl);
        for (&p, &v) in self.layout.permutation().iter().zip(&zl) {
            z[p] = v;
        }
    }

    fn is_symmetric(&self) -> bool {
        false
    }

    fn name(&self) -> String {
        format!("AMGS({})", self.rank)
    }
}

/// Applies the three-factor block product
/// `[I −U; 0 I] · diag(K⁻¹, S⁻¹) · [I 0; −L I]` to `r = (r_K, r_S)`, with
/// `lower(r_K) = Bᵀ K⁻¹ r_K` and `upper(x_S) = K⁻¹ B x_S` supplied by the
/// caller. With exact ingredients this is `A⁻¹ r`.
pub fn schur_ldu_apply(
    r: &[f64],
    n_inn: usize,
    k_solve: &dyn Fn(&[f64]) -> Vec<f64>,
    b_t: &dyn Fn(&[f64]) -> Vec<f64>,
    s_solve: &dyn Fn(&[f64]) -> Vec<f64>,
    upper: &dyn Fn(&[f64]) -> Vec<f64>,
) -> Vec<f64> {
    let (r_k, r_s) = r.split_at(n_inn);
    let y_k = k_solve(r_k);
    let bty = b_t(&y_k);
    let y_s: Vec<f64> = r_s.iter().zip(&bty).map(|(a, b)| a - b).collect();
    let x_s = s_solve(&y_s);
    let u = upper(&x_s);
    let mut x: Vec<f64> = y_k.iter().zip(&u).map(|(a, b)| a - b).collect();
    x.extend(x_s);
    x
}
