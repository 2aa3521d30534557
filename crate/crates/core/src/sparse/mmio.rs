//! Matrix Market coordinate files and plain-text ordering files.

use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::sparse::{invert_permutation, SparseMatrix};

/// Largest row or column count accepted from a file header.
pub const MAX_DIM: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Symmetry {
    General,
    Symmetric,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parses a real (or integer) coordinate Matrix Market file held in memory.
pub fn parse_matrix_market(text: &str) -> Result<SparseMatrix> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty input"))?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(1, "missing %%MatrixMarket matrix header"));
    }
    if fields[2] != "coordinate" {
        return Err(parse_err(1, format!("unsupported format `{}`", fields[2])));
    }
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(parse_err(1, format!("unsupported field `{}`", fields[3])));
    }
    let symmetry = match fields[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(parse_err(1, format!("unsupported symmetry `{other}`"))),
    };

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = data.next().ok_or_else(|| parse_err(2, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| parse_err(size_line, e.to_string()))?;
    if dims.len() != 3 {
        return Err(parse_err(size_line, "size line needs rows, cols, nnz"));
    }
    let (n_rows, n_cols, nnz) = (dims[0], dims[1], dims[2]);
    if n_rows > MAX_DIM || n_cols > MAX_DIM {
        return Err(parse_err(size_line, "dimensions exceed supported maximum"));
    }
    if symmetry == Symmetry::Symmetric && n_rows != n_cols {
        return Err(parse_err(size_line, "symmetric matrix must be square"));
    }

    let mut triplets = Vec::with_capacity(nnz.min(1 << 20));
    let mut seen = 0usize;
    for (ln, l) in data {
        if seen == nnz {
            return Err(parse_err(ln, "more entries than declared"));
        }
        let mut it = l.split_whitespace();
        let (Some(i), Some(j), Some(v), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(parse_err(ln, "entry needs row, col, value"));
        };
        let i: usize = i.parse().map_err(|_| parse_err(ln, "bad row index"))?;
        let j: usize = j.parse().map_err(|_| parse_err(ln, "bad column index"))?;
        let v: f64 = v.parse().map_err(|_| parse_err(ln, "bad value"))?;
        if i == 0 || j == 0 || i > n_rows || j > n_cols {
            return Err(parse_err(ln, format!("index ({i}, {j}) out of range")));
        }
        if !v.is_finite() {
            return Err(parse_err(ln, "non-finite value"));
        }
        if symmetry == Symmetry::Symmetric && j > i {
            return Err(parse_err(ln, "symmetric file stores upper-triangle entry"));
        }
        triplets.push((i - 1, j - 1, v));
        if symmetry == Symmetry::Symmetric && i != j {
            triplets.push((j - 1, i - 1, v));
        }
        seen += 1;
    }
    if seen != nnz {
        return Err(parse_err(
            text.lines().count(),
            format!("declared {nnz} entries, found {seen}"),
        ));
    }
    SparseMatrix::from_triplets(n_rows, n_cols, &triplets)
}

pub fn read_matrix_market(reader: impl Read) -> Result<SparseMatrix> {
    let mut text = String::new();
    BufReader::new(reader).read_to_string(&mut text)?;
    parse_matrix_market(&text)
}

/// Writes `a` in coordinate format. With `Symmetry::Symmetric` only the lower
/// triangle is written; the caller is responsible for `a` being symmetric.
pub fn write_matrix_market(mut w: impl Write, a: &SparseMatrix, symmetry: Symmetry) -> Result<()> {
    let tag = match symmetry {
        Symmetry::General => "general",
        Symmetry::Symmetric => "symmetric",
    };
    let keep = |i: usize, j: usize| symmetry == Symmetry::General || j <= i;
    let nnz = (0..a.n_rows())
        .map(|i| a.row(i).0.iter().filter(|&&j| keep(i, j)).count())
        .sum::<usize>();
    writeln!(w, "%%MatrixMarket matrix coordinate real {tag}")?;
    writeln!(w, "{} {} {}", a.n_rows(), a.n_cols(), nnz)?;
    for i in 0..a.n_rows() {
        let (c, v) = a.row(i);
        for (&j, &x) in c.iter().zip(v) {
            if keep(i, j) {
                writeln!(w, "{} {} {:e}", i + 1, j + 1, x)?;
            }
        }
    }
    Ok(())
}

/// Parses an ordering file: one zero-based index per line, blank lines and
/// `#` comments ignored. The result must be a permutation of `0..len`.
pub fn parse_ordering(text: &str) -> Result<Vec<usize>> {
    let mut perm = Vec::new();
    for (ln, l) in text.lines().enumerate() {
        let t = l.split('#').next().unwrap_or("").trim();
        if t.is_empty() {
            continue;
        }
        let idx: usize = t.parse().map_err(|_| parse_err(ln + 1, format!("bad index `{t}`")))?;
        perm.push(idx);
    }
    invert_permutation(&perm).map_err(|e| parse_err(0, e.to_string()))?;
    Ok(perm)
}

pub fn read_ordering(reader: impl BufRead) -> Result<Vec<usize>> {
    let mut text = String::new();
    let mut reader = reader;
    reader.read_to_string(&mut text)?;
    parse_ordering(&text)
}

pub fn write_ordering(mut w: impl Write, perm: &[usize]) -> Result<()> {
    for p in perm {
        writeln!(w, "{p}")?;
    }
    Ok(())
}
