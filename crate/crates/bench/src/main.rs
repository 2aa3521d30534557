use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use symamg::problems::{build_stretched_grid, make_symmetric_problem, ProblemKind};
use symamg::sparse::mmio::{write_matrix_market, write_ordering, Symmetry};
use symamg_bench::{emit_report, parse_config, preset, run_experiment, ExperimentConfig, Format, ProblemSpec};

#[derive(Parser)]
#[command(name = "bench", about = "Runs preconditioner experiments on the symmetric model problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment file (or a preset name) and print the report.
    Run {
        config: String,
        /// Use the large `full_grid` sizes of the experiment.
        #[arg(long)]
        full: bool,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write each problem of an experiment as Matrix Market plus ordering file.
    Export {
        config: String,
        dir: PathBuf,
        #[arg(long)]
        full: bool,
    },
    /// List the shipped presets.
    Presets,
}

fn load(config: &str) -> Result<ExperimentConfig> {
    let text = if Path::new(config).exists() {
        fs::read_to_string(config).with_context(|| format!("reading {config}"))?
    } else if let Some(t) = preset(config) {
        t.to_string()
    } else {
        bail!("no file or preset named `{config}`");
    };
    Ok(parse_config(&text).with_context(|| format!("parsing {config}"))?)
}

fn export(cfg: &ExperimentConfig, dir: &Path, full: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    let variants: Vec<(String, usize, ProblemKind)> = match &cfg.problem {
        ProblemSpec::Mirrored { s } => s.iter().map(|&s| (format!("s{s}"), s, ProblemKind::Mirrored)).collect(),
        ProblemSpec::Repeated { n_blocks } => n_blocks
            .iter()
            .map(|&n| (format!("nb{n}"), 0, ProblemKind::Repeated { n_blocks: n }))
            .collect(),
    };
    for &g in cfg.grids(full) {
        let grid = build_stretched_grid(g[0], g[1], g[2], [cfg.gamma; 3])?;
        for (tag, s, kind) in &variants {
            let p = make_symmetric_problem(&grid, *s, *kind)?;
            let stem = dir.join(format!("{}_{}x{}x{}_{tag}", cfg.name, g[0], g[1], g[2]));
            write_matrix_market(BufWriter::new(File::create(stem.with_extension("mtx"))?), p.operator(), Symmetry::Symmetric)?;
            write_ordering(BufWriter::new(File::create(stem.with_extension("ord"))?), p.ordering())?;
        }
    }
    Ok(())
}

fn main() -> Result<ExitCode> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            config,
            full,
            threads,
            format,
            out,
        } => {
            let cfg = load(&config)?;
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
            }
            let rows = run_experiment(&cfg, full)?;
            match out {
                Some(path) => {
                    let mut f = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
                    emit_report(&rows, format, &mut f)?;
                    f.flush()?;
                }
                None => emit_report(&rows, format, &mut io::stdout().lock())?,
            }
            if rows.iter().all(|r| r.converged) {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("some solves did not converge");
                Ok(ExitCode::FAILURE)
            }
        }
        Command::Export { config, dir, full } => {
            export(&load(&config)?, &dir, full)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Presets => {
            for (name, _) in symamg_bench::PRESETS {
                println!("{name}");
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
