//! Experiment files: one `key = value` pair per line, `#` starts a comment.
//!
//! ```text
//! name = table32
//! grid = 32            # cube edge, or 32x32x16; lists sweep
//! full_grid = 64       # replaces `grid` under --full
//! gamma = 1.5
//! kind = mirrored      # or repeated
//! s = 0, 1, 2, 3       # mirrored only
//! n_blocks = 2, 4      # repeated only
//! preconditioners = AMG, AMGR
//! method = pcg         # or gmres
//! ```
//!
//! Remaining keys: `tolerance`, `max_iterations`, `restart`, `seed`,
//! `repetitions`, `baseline`, `pattern_power`, `eig_tol`, `theta`, `power_k`,
//! `sweeps`, `drop_tol`.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use symamg::krylov::{KrylovConfig, KrylovMethod};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: bad value for `{key}`: {reason}")]
    Value { line: usize, key: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondSpec {
    /// FSAI of the whole operator.
    Fsai,
    Amg,
    LrcFsai(usize),
    LrcAmg(usize),
    Amgs(usize),
    Amgr,
}

impl FromStr for PrecondSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        let (head, rank) = match s.find('(') {
            Some(open) => {
                let inner = s[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| format!("unclosed rank in `{s}`"))?;
                let k = inner
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| format!("bad rank in `{s}`"))?;
                (s[..open].trim(), Some(k))
            }
            None => (s, None),
        };
        match (head.to_ascii_uppercase().as_str(), rank) {
            ("FSAI", None) => Ok(Self::Fsai),
            ("AMG", None) => Ok(Self::Amg),
            ("AMGR", None) => Ok(Self::Amgr),
            ("LRCFSAI", Some(k)) => Ok(Self::LrcFsai(k)),
            ("LRCAMG", Some(k)) => Ok(Self::LrcAmg(k)),
            ("AMGS", Some(k)) => Ok(Self::Amgs(k)),
            ("LRCFSAI" | "LRCAMG" | "AMGS", None) => Err(format!("`{head}` needs a rank, e.g. {head}(4)")),
            _ => Err(format!("unknown preconditioner `{s}`")),
        }
    }
}

impl fmt::Display for PrecondSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fsai => write!(f, "FSAI"),
            Self::Amg => write!(f, "AMG"),
            Self::Amgr => write!(f, "AMGR"),
            Self::LrcFsai(k) => write!(f, "LRCFSAI({k})"),
            Self::LrcAmg(k) => write!(f, "LRCAMG({k})"),
            Self::Amgs(k) => write!(f, "AMGS({k})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Mirrored { s: Vec<usize> },
    Repeated { n_blocks: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrecondParams {
    pub pattern_power: usize,
    pub eig_tol: f64,
    pub theta: f64,
    pub power_k: usize,
    pub sweeps: usize,
    pub drop_tol: f64,
}

impl Default for PrecondParams {
    fn default() -> Self {
        Self {
            pattern_power: 1,
            eig_tol: 1e-2,
            theta: 0.25,
            power_k: 2,
            sweeps: 1,
            drop_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub grids: Vec<[usize; 3]>,
    pub full_grids: Option<Vec<[usize; 3]>>,
    pub gamma: f64,
    pub problem: ProblemSpec,
    pub preconditioners: Vec<PrecondSpec>,
    /// Index into `preconditioners` of the speed-up reference.
    pub baseline: usize,
    pub params: PrecondParams,
    pub solver: KrylovConfig,
    pub seed: u64,
    pub repetitions: usize,
}

impl ExperimentConfig {
    pub fn grids(&self, full: bool) -> &[[usize; 3]] {
        match (&self.full_grids, full) {
            (Some(g), true) => g,
            _ => &self.grids,
        }
    }
}

const KEYS: &[&str] = &[
    "name",
    "grid",
    "full_grid",
    "gamma",
    "kind",
    "s",
    "n_blocks",
    "preconditioners",
    "baseline",
    "method",
    "tolerance",
    "max_iterations",
    "restart",
    "seed",
    "repetitions",
    "pattern_power",
    "eig_tol",
    "theta",
    "power_k",
    "sweeps",
    "drop_tol",
];

fn parse_grid(v: &str) -> Result<[usize; 3], String> {
    let parts: Vec<&str> = v.split('x').map(str::trim).collect();
    let nums = parts
        .iter()
        .map(|p| p.parse::<usize>().map_err(|_| format!("`{v}` is not a grid size")))
        .collect::<Result<Vec<_>, _>>()?;
    let g = match nums[..] {
        [n] => [n; 3],
        [x, y, z] => [x, y, z],
        _ => return Err(format!("`{v}` is neither N nor NxNyNz")),
    };
    if g.contains(&0) {
        return Err("grid sizes must be positive".into());
    }
    Ok(g)
}

fn parse_list<T>(v: &str, item: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, String> {
    let out = v
        .split(',')
        .map(|p| item(p.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

fn parse_num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut seen = HashSet::new();
    let mut cfg = ExperimentConfig {
        name: "experiment".into(),
        grids: vec![[32; 3]],
        full_grids: None,
        gamma: 1.5,
        problem: ProblemSpec::Mirrored { s: vec![0] },
        preconditioners: Vec::new(),
        baseline: 0,
        params: PrecondParams::default(),
        solver: KrylovConfig::default(),
        seed: 42,
        repetitions: 1,
    };
    let mut kind = None;
    let mut s_list = None;
    let mut nb_list = None;
    let mut baseline = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or(ConfigError::Syntax { line })?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey { line, key: key.into() });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::Duplicate { line, key: key.into() });
        }
        let bad = |reason: String| ConfigError::Value {
            line,
            key: key.into(),
            reason,
        };
        match key {
            "name" => cfg.name = value.to_string(),
            "grid" => cfg.grids = parse_list(value, parse_grid).map_err(bad)?,
            "full_grid" => cfg.full_grids = Some(parse_list(value, parse_grid).map_err(bad)?),
            "gamma" => cfg.gamma = parse_num(value).map_err(bad)?,
            "kind" => kind = Some(value.to_ascii_lowercase()),
            "s" => s_list = Some(parse_list(value, parse_num::<usize>).map_err(bad)?),
            "n_blocks" => nb_list = Some(parse_list(value, parse_num::<usize>).map_err(bad)?),
            "preconditioners" => cfg.preconditioners = parse_list(value, |p| p.parse()).map_err(bad)?,
            "baseline" => baseline = Some(value.parse::<PrecondSpec>().map_err(bad)?),
            "method" => {
                cfg.solver.method = match value.to_ascii_lowercase().as_str() {
                    "pcg" | "cg" => KrylovMethod::Pcg,
                    "gmres" => KrylovMethod::Gmres,
                    _ => return Err(bad(format!("unknown method `{value}`"))),
                }
            }
            "tolerance" => cfg.solver.tolerance = parse_num(value).map_err(bad)?,
            "max_iterations" => cfg.solver.max_iterations = parse_num(value).map_err(bad)?,
            "restart" => cfg.solver.gmres_restart = Some(parse_num(value).map_err(bad)?),
            "seed" => cfg.seed = parse_num(value).map_err(bad)?,
            "repetitions" => cfg.repetitions = parse_num(value).map_err(bad)?,
            "pattern_power" => cfg.params.pattern_power = parse_num(value).map_err(bad)?,
            "eig_tol" => cfg.params.eig_tol = parse_num(value).map_err(bad)?,
            "theta" => cfg.params.theta = parse_num(value).map_err(bad)?,
            "power_k" => cfg.params.power_k = parse_num(value).map_err(bad)?,
            "sweeps" => cfg.params.sweeps = parse_num(value).map_err(bad)?,
            "drop_tol" => cfg.params.drop_tol = parse_num(value).map_err(bad)?,
            _ => unreachable!("key list and match arms agree"),
        }
    }
    cfg.problem = match kind.as_deref().unwrap_or("mirrored") {
        "mirrored" => {
            if nb_list.is_some() {
                return Err(ConfigError::Invalid("`n_blocks` needs kind = repeated".into()));
            }
            ProblemSpec::Mirrored {
                s: s_list.unwrap_or_else(|| vec![0]),
            }
        }
        "repeated" => {
            if s_list.is_some() {
                return Err(ConfigError::Invalid("`s` needs kind = mirrored".into()));
            }
            ProblemSpec::Repeated {
                n_blocks: nb_list.ok_or_else(|| ConfigError::Invalid("kind = repeated needs `n_blocks`".into()))?,
            }
        }
        other => return Err(ConfigError::Invalid(format!("unknown kind `{other}`"))),
    };
    validate(&mut cfg, baseline)?;
    Ok(cfg)
}

fn validate(cfg: &mut ExperimentConfig, baseline: Option<PrecondSpec>) -> Result<(), ConfigError> {
    let invalid = |m: &str| Err(ConfigError::Invalid(m.into()));
    if cfg.preconditioners.is_empty() {
        return invalid("`preconditioners` is required");
    }
    cfg.baseline = match baseline {
        None => 0,
        Some(b) => match cfg.preconditioners.iter().position(|&p| p == b) {
            Some(i) => i,
            None => return Err(ConfigError::Invalid(format!("baseline {b} is not in the preconditioner list"))),
        },
    };
    match &cfg.problem {
        ProblemSpec::Mirrored { s } if s.iter().any(|&v| v > 3) => return invalid("s must lie in 0..=3"),
        ProblemSpec::Repeated { n_blocks } if n_blocks.contains(&0) => return invalid("n_blocks must be positive"),
        _ => {}
    }
    if !cfg.gamma.is_finite() || cfg.gamma < 0.0 {
        return invalid("gamma must be finite and non-negative");
    }
    if !(cfg.solver.tolerance > 0.0 && cfg.solver.tolerance < 1.0) {
        return invalid("tolerance must lie in (0, 1)");
    }
    if cfg.solver.max_iterations == 0 || cfg.repetitions == 0 {
        return invalid("max_iterations and repetitions must be positive");
    }
    if cfg.solver.gmres_restart == Some(0) {
        return invalid("restart must be positive");
    }
    let p = &cfg.params;
    if p.pattern_power == 0 || p.sweeps == 0 || !(1..=3).contains(&p.power_k) {
        return invalid("pattern_power and sweeps must be positive, power_k in 1..=3");
    }
    if !(p.eig_tol > 0.0 && p.eig_tol < 1.0) || !(0.0..1.0).contains(&p.theta) || !(0.0..1.0).contains(&p.drop_tol) {
        return invalid("eig_tol must lie in (0, 1), theta and drop_tol in [0, 1)");
    }
    if cfg.solver.method == KrylovMethod::Pcg {
        if let Some(p) = cfg.preconditioners.iter().find(|p| matches!(p, PrecondSpec::LrcAmg(_) | PrecondSpec::Amgs(_))) {
            return Err(ConfigError::Invalid(format!("{p} is nonsymmetric; use method = gmres")));
        }
    }
    Ok(())
}
