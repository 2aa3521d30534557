//! Preconditioned CG and GMRES with optional constant null-space projection.

use std::time::Instant;

use log::warn;

use crate::error::{check_dim, Error, Result};
use crate::sparse::{BlockOperator, SparseMatrix};
use crate::vecops::{axpy, dot, mean, norm, xpby};

pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for SparseMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.spmv_into(x, y);
    }
}

impl LinearOperator for BlockOperator {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_into(x, y);
    }
}

/// A linear operator given by a closure.
pub struct FnOperator<F> {
    n: usize,
    f: F,
}

impl<F: Fn(&[f64], &mut [f64]) + Send + Sync> FnOperator<F> {
    pub fn new(n: usize, f: F) -> Self {
        Self { n, f }
    }
}

impl<F: Fn(&[f64], &mut [f64]) + Send + Sync> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        (self.f)(x, y)
    }
}

/// The "apply M r" handle every preconditioner exposes to the solvers.
pub trait Preconditioner: Send + Sync {
    fn dim(&self) -> usize;
    fn apply(&self, r: &[f64], z: &mut [f64]);

    /// Whether `M` is symmetric; CG refuses preconditioners returning false.
    fn is_symmetric(&self) -> bool {
        true
    }

    fn name(&self) -> String;
}

impl<P: Preconditioner + ?Sized> Preconditioner for Box<P> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        (**self).apply(r, z)
    }

    fn is_symmetric(&self) -> bool {
        (**self).is_symmetric()
    }

    fn name(&self) -> String {
        (**self).name()
    }
}

/// An operator applied to several column-contiguous vectors at once.
pub trait MultiApply: Send + Sync {
    fn dim(&self) -> usize;
    fn apply_multi(&self, x: &[f64], n_vecs: usize, y: &mut [f64]);
}

impl MultiApply for SparseMatrix {
    fn dim(&self) -> usize {
        self.n_rows()
    }

    fn apply_multi(&self, x: &[f64], n_vecs: usize, y: &mut [f64]) {
        self.spmm_into(x, n_vecs, y);
    }
}

#[derive(Debug, Clone)]
pub struct IdentityPreconditioner(pub usize);

impl Preconditioner for IdentityPreconditioner {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }

    fn name(&self) -> String {
        "none".into()
    }
}

/// Diagonal scaling; zero diagonal entries map to zero.
#[derive(Debug, Clone)]
pub struct JacobiPreconditioner {
    inv_diag: Vec<f64>,
}

impl JacobiPreconditioner {
    pub fn new(a: &SparseMatrix) -> Self {
        let inv_diag = a
            .diagonal()
            .iter()
            .map(|&d| if d != 0.0 { 1.0 / d } else { 0.0 })
            .collect();
        Self { inv_diag }
    }
}

impl Preconditioner for JacobiPreconditioner {
    fn dim(&self) -> usize {
        self.inv_diag.len()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * d;
        }
    }

    fn name(&self) -> String {
        "Jacobi".into()
    }
}

/// An explicit sparse matrix used as the preconditioner.
#[derive(Debug, Clone)]
pub struct MatrixPreconditioner {
    matrix: SparseMatrix,
    symmetric: bool,
}

impl MatrixPreconditioner {
    pub fn new(matrix: SparseMatrix) -> Self {
        let symmetric = matrix.symmetry_defect() <= 1e-14;
        Self { matrix, symmetric }
    }
}

impl Preconditioner for MatrixPreconditioner {
    fn dim(&self) -> usize {
        self.matrix.n_rows()
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        self.matrix.spmv_into(r, z);
    }

    fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    fn name(&self) -> String {
        "matrix".into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrylovMethod {
    Pcg,
    Gmres,
}

impl KrylovMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            KrylovMethod::Pcg => "pcg",
            KrylovMethod::Gmres => "gmres",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrylovConfig {
    pub method: KrylovMethod,
    /// Relative 2-norm residual target.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// GMRES restart length; `None` runs full GMRES.
    pub gmres_restart: Option<usize>,
    /// Remove the mean from iterates and residuals (pure Neumann systems).
    pub nullspace_projection: bool,
}

impl Default for KrylovConfig {
    fn default() -> Self {
        Self {
            method: KrylovMethod::Pcg,
            tolerance: 1e-8,
            max_iterations: 2000,
            gmres_restart: None,
            nullspace_projection: true,
        }
    }
}

impl KrylovConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must lie in (0, 1), got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be at least 1".into()));
        }
        if self.gmres_restart == Some(0) {
            return Err(Error::InvalidArgument("gmres restart must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    /// `‖r_i‖ / ‖b‖` after each iteration, starting with 1. The final entry
    /// is the recomputed true residual.
    pub relative_residuals: Vec<f64>,
    pub converged: bool,
    /// GMRES only: a whole restart cycle failed to reduce the residual.
    pub stagnated: bool,
    pub wall_time: f64,
}

impl SolveStats {
    pub fn final_residual(&self) -> f64 {
        *self.relative_residuals.last().unwrap_or(&0.0)
    }

    pub const CSV_HEADER: &'static str = "method,preconditioner,n_b,n,iterations,time";

    pub fn csv_row(&self, method: KrylovMethod, preconditioner: &str, n_b: usize, n: usize) -> String {
        let name = if preconditioner.contains([',', '"', '\n']) {
            format!("\"{}\"", preconditioner.replace('"', "\"\""))
        } else {
            preconditioner.to_string()
        };
        format!(
            "{},{},{},{},{},{:.6}",
            method.as_str(),
            name,
            n_b,
            n,
            self.iterations,
            self.wall_time
        )
    }
}

/// `x - mean(x)`.
pub fn project_nullspace(x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    project_nullspace_in_place(&mut y);
    y
}

pub fn project_nullspace_in_place(x: &mut [f64]) {
    let m = mean(x);
    x.iter_mut().for_each(|v| *v -= m);
}

fn zero_rhs_stats(start: Instant) -> SolveStats {
    SolveStats {
        iterations: 0,
        relative_residuals: vec![0.0],
        converged: true,
        stagnated: false,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

fn check_inputs(a: &dyn LinearOperator, m: &dyn Preconditioner, b: &[f64], cfg: &KrylovConfig) -> Result<()> {
    cfg.validate()?;
    check_dim("krylov operator", a.dim(), b.len())?;
    check_dim("krylov preconditioner", a.dim(), m.dim())
}

/// Dispatches on `cfg.method`.
pub fn solve(
    a: &dyn LinearOperator,
    m: &dyn Preconditioner,
    b: &[f64],
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    match cfg.method {
        KrylovMethod::Pcg => pcg(a, m, b, cfg),
        KrylovMethod::Gmres => gmres(a, m, b, cfg),
    }
}

/// Preconditioned conjugate gradients from a zero initial guess.
///
/// When the recursive residual meets the tolerance the true residual is
/// recomputed; if it does not, the recursion restarts from it.
pub fn pcg(
    a: &dyn LinearOperator,
    m: &dyn Preconditioner,
    b: &[f64],
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    check_inputs(a, m, b, cfg)?;
    if !m.is_symmetric() {
        return Err(Error::NonsymmetricPreconditioner(m.name()));
    }
    let start = Instant::now();
    let n = b.len();
    let proj = cfg.nullspace_projection;
    let mut rhs = b.to_vec();
    if proj {
        project_nullspace_in_place(&mut rhs);
    }
    let bnorm = norm(&rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, zero_rhs_stats(start)));
    }
    let mut r = rhs.clone();
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    let precondition = |r: &[f64], z: &mut [f64]| {
        m.apply(r, z);
        if proj {
            project_nullspace_in_place(z);
        }
    };
    precondition(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = vec![1.0];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        a.apply(&p, &mut q);
        let curvature = dot(&p, &q);
        if !(curvature > 0.0) || !(rz > 0.0) {
            return Err(Error::Breakdown {
                iteration: iterations,
                curvature: if rz > 0.0 { curvature } else { rz },
            });
        }
        let alpha = rz / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        if proj {
            project_nullspace_in_place(&mut x);
            project_nullspace_in_place(&mut r);
        }
        let mut rel = norm(&r) / bnorm;
        if rel <= cfg.tolerance {
            a.apply(&x, &mut q);
            for i in 0..n {
                r[i] = rhs[i] - q[i];
            }
            if proj {
                project_nullspace_in_place(&mut r);
            }
            rel = norm(&r) / bnorm;
            history.push(rel);
            if rel <= cfg.tolerance {
                converged = true;
                break;
            }
            precondition(&r, &mut z);
            p.copy_from_slice(&z);
            rz = dot(&r, &z);
            continue;
        }
        history.push(rel);
        precondition(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        xpby(&z, beta, &mut p);
    }
    if !converged {
        a.apply(&x, &mut q);
        for i in 0..n {
            r[i] = rhs[i] - q[i];
        }
        if proj {
            project_nullspace_in_place(&mut r);
        }
        *history.last_mut().unwrap() = norm(&r) / bnorm;
    }
    Ok((
        x,
        SolveStats {
            iterations,
            relative_residuals: history,
            converged,
            stagnated: false,
            wall_time: start.elapsed().as_secs_f64(),
        },
    ))
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let h = a.hypot(b);
        (a / h, b / h)
    }
}

/// Right-preconditioned GMRES with modified Gram-Schmidt, restarted every
/// `cfg.gmres_restart` iterations (never when `None`).
pub fn gmres(
    a: &dyn LinearOperator,
    m: &dyn Preconditioner,
    b: &[f64],
    cfg: &KrylovConfig,
) -> Result<(Vec<f64>, SolveStats)> {
    check_inputs(a, m, b, cfg)?;
    let start = Instant::now();
    let n = b.len();
    let proj = cfg.nullspace_projection;
    let mut rhs = b.to_vec();
    if proj {
        project_nullspace_in_place(&mut rhs);
    }
    let bnorm = norm(&rhs);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, zero_rhs_stats(start)));
    }
    let restart = cfg.gmres_restart.unwrap_or(cfg.max_iterations).max(1);
    let mut history = vec![1.0];
    let mut iterations = 0;
    let mut converged = false;
    let mut stagnated = false;
    let mut r = rhs.clone();
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut rel = 1.0;
    while iterations < cfg.max_iterations {
        let beta = norm(&r);
        let cycle_start = rel;
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<(f64, f64)> = Vec::new();
        let mut g = vec![beta];
        let steps = restart.min(cfg.max_iterations - iterations);
        for j in 0..steps {
            m.apply(&basis[j], &mut z);
            if proj {
                project_nullspace_in_place(&mut z);
            }
            a.apply(&z, &mut w);
            if proj {
                project_nullspace_in_place(&mut w);
            }
            let mut col = vec![0.0; j + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = dot(&w, v);
                axpy(-hij, v, &mut w);
                col[i] = hij;
            }
            let hnext = norm(&w);
            col[j + 1] = hnext;
            for (i, &(c, s)) in cs.iter().enumerate() {
                let (u, v) = (col[i], col[i + 1]);
                col[i] = c * u + s * v;
                col[i + 1] = -s * u + c * v;
            }
            let (c, s) = givens(col[j], col[j + 1]);
            col[j] = c * col[j] + s * col[j + 1];
            col[j + 1] = 0.0;
            cs.push((c, s));
            let gj = g[j];
            g[j] = c * gj;
            g.push(-s * gj);
            h.push(col);
            iterations += 1;
            rel = g[j + 1].abs() / bnorm;
            history.push(rel);
            let happy = hnext <= 1e-14 * beta;
            if rel <= cfg.tolerance || happy {
                break;
            }
            basis.push(w.iter().map(|v| v / hnext).collect());
        }
        let k = h.len();
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut acc = g[i];
            for (jj, yj) in y.iter().enumerate().skip(i + 1) {
                acc -= h[jj][i] * yj;
            }
            y[i] = if h[i][i] != 0.0 { acc / h[i][i] } else { 0.0 };
        }
        w.iter_mut().for_each(|v| *v = 0.0);
        for (v, yi) in basis.iter().zip(&y) {
            axpy(*yi, v, &mut w);
        }
        m.apply(&w, &mut z);
        if proj {
            project_nullspace_in_place(&mut z);
        }
        axpy(1.0, &z, &mut x);
        a.apply(&x, &mut w);
        for i in 0..n {
            r[i] = rhs[i] - w[i];
        }
        if proj {
            project_nullspace_in_place(&mut r);
        }
        rel = norm(&r) / bnorm;
        *history.last_mut().unwrap() = rel;
        if rel <= cfg.tolerance {
            converged = true;
            break;
        }
        if rel >= cycle_start * (1.0 - 1e-12) {
            stagnated = true;
            warn!("GMRES stagnated after {iterations} iterations at residual {rel:e}");
            break;
        }
    }
    Ok((
        x,
        SolveStats {
            iterations,
            relative_residuals: history,
            converged,
            stagnated,
            wall_time: start.elapsed().as_secs_f64(),
        },
    ))
}
