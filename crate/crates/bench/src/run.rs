use std::time::Instant;

use anyhow::{Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use symamg::amg::{setup_amg, AmgConfig, CoarseningStats};
use symamg::amgr::{build_amgr, AmgrConfig};
use symamg::amgs::{build_amgs, AmgsConfig};
use symamg::eigen::EigOptions;
use symamg::fsai::build_fsai;
use symamg::krylov::{solve, Preconditioner};
use symamg::lowrank::{build_lrcamg, build_lrcfsai};
use symamg::problems::{
    build_stretched_grid, make_compatible_rhs, make_inner_interface_layout, make_symmetric_problem, ProblemKind,
    SymmetricProblem,
};
use symamg::symmetry::extract_subsystems;

use crate::config::{ExperimentConfig, PrecondParams, PrecondSpec, ProblemSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub grid: String,
    pub s: Option<usize>,
    pub n_b: usize,
    pub preconditioner: String,
    pub method: String,
    pub coarsening_ratio: Option<f64>,
    pub avg_nnzr: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub t_setup_seconds: f64,
    pub t_sol_seconds: f64,
    pub speedup_vs_baseline: f64,
}

fn grid_label(g: [usize; 3]) -> String {
    format!("{}x{}x{}", g[0], g[1], g[2])
}

fn build(spec: PrecondSpec, problem: &SymmetricProblem, p: &PrecondParams) -> Result<(Box<dyn Preconditioner>, Option<CoarseningStats>)> {
    let eig = EigOptions {
        tol: p.eig_tol,
        ..EigOptions::default()
    };
    let amg = AmgConfig {
        theta: p.theta,
        pre_sweeps: p.sweeps,
        post_sweeps: p.sweeps,
        ..AmgConfig::default()
    };
    let subsystems = || extract_subsystems(problem.blocks()).context("low-rank corrections need a mirrored problem");
    Ok(match spec {
        PrecondSpec::Fsai => (Box::new(build_fsai(problem.operator(), p.pattern_power)?), None),
        PrecondSpec::Amg => {
            let h = setup_amg(problem.operator(), &amg)?;
            let stats = h.coarsening_stats();
            (Box::new(h), Some(stats))
        }
        PrecondSpec::LrcFsai(k) => (Box::new(build_lrcfsai(&subsystems()?, k, p.pattern_power, &eig)?), None),
        PrecondSpec::LrcAmg(k) => (Box::new(build_lrcamg(&subsystems()?, k, &amg, &eig)?), None),
        PrecondSpec::Amgs(k) => {
            let layout = make_inner_interface_layout(problem)?;
            let cfg = AmgsConfig {
                rank: k,
                drop_tol: p.drop_tol,
                amg,
                eig,
                ..AmgsConfig::default()
            };
            (Box::new(build_amgs(problem, &layout, &cfg)?), None)
        }
        PrecondSpec::Amgr => {
            let layout = make_inner_interface_layout(problem)?;
            let defaults = AmgrConfig::default();
            let cfg = AmgrConfig {
                theta: p.theta,
                power_k: p.power_k,
                n_smooth: p.sweeps,
                amg: AmgConfig {
                    theta: p.theta,
                    ..defaults.amg.clone()
                },
                ..defaults
            };
            let m = build_amgr(problem, &layout, &cfg)?;
            let stats = m.stats();
            (Box::new(m), Some(stats))
        }
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn run_one(spec: PrecondSpec, problem: &SymmetricProblem, rhs: &[f64], cfg: &ExperimentConfig) -> Result<(ReportRowCore, f64, f64)> {
    let mut setups = Vec::new();
    let mut sols = Vec::new();
    let mut core = None;
    for _ in 0..cfg.repetitions {
        let t = Instant::now();
        let (m, stats) = build(spec, problem, &cfg.params).with_context(|| format!("building {spec}"))?;
        setups.push(t.elapsed().as_secs_f64());
        let t = Instant::now();
        let (iterations, converged) = match solve(problem.operator(), &m, rhs, &cfg.solver) {
            Ok((_, st)) => (st.iterations, st.converged),
            Err(e) => {
                warn!("{spec}: {e}");
                (cfg.solver.max_iterations, false)
            }
        };
        sols.push(t.elapsed().as_secs_f64());
        core = Some(ReportRowCore {
            name: m.name(),
            stats,
            iterations,
            converged,
        });
    }
    Ok((core.expect("at least one repetition"), median(setups), median(sols)))
}

struct ReportRowCore {
    name: String,
    stats: Option<CoarseningStats>,
    iterations: usize,
    converged: bool,
}

/// Runs every grid × symmetry variant × preconditioner combination in
/// configuration order.
pub fn run_experiment(cfg: &ExperimentConfig, full: bool) -> Result<Vec<ReportRow>> {
    let variants: Vec<(usize, ProblemKind)> = match &cfg.problem {
        ProblemSpec::Mirrored { s } => s.iter().map(|&s| (s, ProblemKind::Mirrored)).collect(),
        ProblemSpec::Repeated { n_blocks } => n_blocks
            .iter()
            .map(|&n| (0, ProblemKind::Repeated { n_blocks: n }))
            .collect(),
    };
    let mut rows = Vec::new();
    for &g in cfg.grids(full) {
        let grid = build_stretched_grid(g[0], g[1], g[2], [cfg.gamma; 3])?;
        for &(s, kind) in &variants {
            let problem = make_symmetric_problem(&grid, s, kind).with_context(|| format!("grid {}", grid_label(g)))?;
            let rhs = make_compatible_rhs(problem.n(), cfg.seed);
            let first = rows.len();
            for &spec in &cfg.preconditioners {
                let (core, t_setup, t_sol) = run_one(spec, &problem, &rhs, cfg)?;
                info!("{} s={s} n_b={} {}: {} its", grid_label(g), problem.n_blocks(), core.name, core.iterations);
                rows.push(ReportRow {
                    grid: grid_label(g),
                    s: matches!(kind, ProblemKind::Mirrored).then_some(s),
                    n_b: problem.n_blocks(),
                    preconditioner: core.name,
                    method: cfg.solver.method.as_str().into(),
                    coarsening_ratio: core.stats.map(|c| c.coarsening_ratio),
                    avg_nnzr: core.stats.map(|c| c.avg_nnzr),
                    iterations: core.iterations,
                    converged: core.converged,
                    t_setup_seconds: t_setup,
                    t_sol_seconds: t_sol,
                    speedup_vs_baseline: 1.0,
                });
            }
            let base = rows[first + cfg.baseline].t_sol_seconds;
            for r in &mut rows[first..] {
                r.speedup_vs_baseline = if r.t_sol_seconds > 0.0 { base / r.t_sol_seconds } else { 1.0 };
            }
        }
    }
    Ok(rows)
}
