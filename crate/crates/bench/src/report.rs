use std::io::Write;

use anyhow::Result;

use crate::run::ReportRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Table,
    Json,
}

const HEADER: [&str; 12] = [
    "grid",
    "s",
    "n_b",
    "preconditioner",
    "method",
    "coarsening_ratio",
    "avg_nnzr",
    "iterations",
    "converged",
    "t_setup_seconds",
    "t_sol_seconds",
    "speedup_vs_baseline",
];

fn table_cells(r: &ReportRow) -> [String; 12] {
    let opt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
    [
        r.grid.clone(),
        r.s.map_or("-".into(), |s| s.to_string()),
        r.n_b.to_string(),
        r.preconditioner.clone(),
        r.method.clone(),
        opt(r.coarsening_ratio, 3),
        opt(r.avg_nnzr, 1),
        r.iterations.to_string(),
        r.converged.to_string(),
        format!("{:.3}", r.t_setup_seconds),
        format!("{:.3}", r.t_sol_seconds),
        format!("{:.2}", r.speedup_vs_baseline),
    ]
}

pub fn emit_report(rows: &[ReportRow], format: Format, out: &mut dyn Write) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            w.write_record(HEADER)?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, rows)?;
            writeln!(out)?;
        }
        Format::Table => {
            let cells: Vec<[String; 12]> = rows.iter().map(table_cells).collect();
            let mut widths = HEADER.map(str::len);
            for c in &cells {
                for (w, s) in widths.iter_mut().zip(c) {
                    *w = (*w).max(s.chars().count());
                }
            }
            let line = |out: &mut dyn Write, c: &[&str]| -> std::io::Result<()> {
                let text: Vec<String> = c
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(i, (s, w))| if i < 5 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                    .collect();
                writeln!(out, "{}", text.join("  ").trim_end())
            };
            line(out, &HEADER)?;
            for c in &cells {
                line(out, &c.iter().map(String::as_str).collect::<Vec<_>>())?;
            }
        }
    }
    Ok(())
}

/// Reads rows back from CSV written by [`emit_report`].
pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
