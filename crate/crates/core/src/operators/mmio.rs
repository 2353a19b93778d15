//! Matrix Market reader and writer (real `coordinate` and `array` formats, `general` and
//! `symmetric` storage).

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::{BlockVector, SparseOperator, Symmetry};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Coordinate,
    Array,
}

struct Parsed {
    rows: usize,
    cols: usize,
    symmetric: bool,
    entries: Vec<(usize, usize, f64)>,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), line, message: message.into() }
}

fn parse_file(path: &Path) -> Result<Parsed> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (hline, header) = lines.next().ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let tokens: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_err(path, hline, "expected `%%MatrixMarket matrix <format> <field> <symmetry>`"));
    }
    let format = match tokens[2].as_str() {
        "coordinate" => Format::Coordinate,
        "array" => Format::Array,
        other => return Err(Error::UnsupportedField { path: path.to_path_buf(), what: other.into() }),
    };
    match tokens[3].as_str() {
        "real" | "integer" | "double" => {}
        other => return Err(Error::UnsupportedField { path: path.to_path_buf(), what: other.into() }),
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(Error::UnsupportedField { path: path.to_path_buf(), what: other.into() }),
    };

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (sline, size) = data.next().ok_or_else(|| parse_err(path, hline + 1, "missing size line"))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| parse_err(path, sline, format!("bad size `{t}`: {e}"))))
        .collect::<Result<_>>()?;
    let expected = if format == Format::Coordinate { 3 } else { 2 };
    if dims.len() != expected {
        return Err(parse_err(path, sline, format!("expected {expected} size fields, found {}", dims.len())));
    }
    let (rows, cols) = (dims[0], dims[1]);
    if symmetric && rows != cols {
        return Err(parse_err(path, sline, "symmetric storage requires a square matrix"));
    }

    let parse_value = |line: usize, t: &str| -> Result<f64> {
        let v: f64 = t.parse().map_err(|e| parse_err(path, line, format!("bad value `{t}`: {e}")))?;
        if !v.is_finite() {
            return Err(parse_err(path, line, format!("non-finite value `{t}`")));
        }
        Ok(v)
    };

    let mut entries = Vec::new();
    match format {
        Format::Coordinate => {
            let nnz = dims[2];
            entries.reserve(nnz);
            for _ in 0..nnz {
                let (ln, l) = data.next().ok_or_else(|| parse_err(path, sline, format!("expected {nnz} entries")))?;
                let f: Vec<&str> = l.split_whitespace().collect();
                if f.len() != 3 {
                    return Err(parse_err(path, ln, format!("expected `row col value`, found {} fields", f.len())));
                }
                let index = |t: &str, bound: usize| -> Result<usize> {
                    let i: usize = t.parse().map_err(|e| parse_err(path, ln, format!("bad index `{t}`: {e}")))?;
                    if i == 0 || i > bound {
                        return Err(parse_err(path, ln, format!("index {i} out of range 1..={bound}")));
                    }
                    Ok(i - 1)
                };
                let (i, j) = (index(f[0], rows)?, index(f[1], cols)?);
                if symmetric && j > i {
                    return Err(parse_err(path, ln, "symmetric storage lists only the lower triangle"));
                }
                entries.push((i, j, parse_value(ln, f[2])?));
            }
        }
        Format::Array => {
            // column-major; symmetric storage holds the lower triangle column by column
            for j in 0..cols {
                let start = if symmetric { j } else { 0 };
                for i in start..rows {
                    let (ln, l) = data.next().ok_or_else(|| parse_err(path, sline, "too few array entries"))?;
                    let f: Vec<&str> = l.split_whitespace().collect();
                    if f.len() != 1 {
                        return Err(parse_err(path, ln, format!("expected one value, found {} fields", f.len())));
                    }
                    entries.push((i, j, parse_value(ln, f[0])?));
                }
            }
        }
    }
    if let Some((ln, _)) = data.next() {
        return Err(parse_err(path, ln, "unexpected trailing data"));
    }
    if symmetric {
        let mirrored: Vec<_> = entries.iter().filter(|e| e.0 != e.1).map(|&(i, j, v)| (j, i, v)).collect();
        entries.extend(mirrored);
    }
    Ok(Parsed { rows, cols, symmetric, entries })
}

/// Reads a square matrix into sparse form. Symmetric storage is expanded to full structure.
pub fn read_sparse_matrix_market(path: impl AsRef<Path>) -> Result<SparseOperator> {
    let path = path.as_ref();
    let p = parse_file(path)?;
    if p.rows != p.cols {
        return Err(parse_err(path, 1, format!("operator must be square, found {}x{}", p.rows, p.cols)));
    }
    let hint = if p.symmetric { Symmetry::Symmetric } else { Symmetry::General };
    SparseOperator::from_triplets(p.rows, &p.entries, hint)
}

/// Reads any real matrix densely.
pub fn read_dense_matrix_market(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let p = parse_file(path.as_ref())?;
    let mut m = DMatrix::zeros(p.rows, p.cols);
    for (i, j, v) in p.entries {
        m[(i, j)] += v;
    }
    Ok(m)
}

/// Reads the coefficient `A` and the right-hand-side factor `C`.
pub fn read_matrix_market(path_a: impl AsRef<Path>, path_c: impl AsRef<Path>) -> Result<(SparseOperator, BlockVector)> {
    let a = read_sparse_matrix_market(path_a)?;
    let c = read_dense_matrix_market(path_c.as_ref())?;
    if c.nrows() != a.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{}: factor has {} rows, operator order is {}",
            path_c.as_ref().display(),
            c.nrows(),
            a.dim()
        )));
    }
    Ok((a, BlockVector::new(c)?))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: PathBuf::from(path), source }
}

/// Writes in coordinate format; symmetric operators store their lower triangle.
pub fn write_sparse_matrix_market(path: impl AsRef<Path>, a: &SparseOperator) -> Result<()> {
    let path = path.as_ref();
    let symmetric = a.symmetry() == Symmetry::Symmetric;
    let entries: Vec<_> = a.triplets().filter(|&(i, j, _)| !symmetric || j <= i).collect();
    let mut out = String::new();
    out.push_str(&format!(
        "%%MatrixMarket matrix coordinate real {}\n{} {} {}\n",
        if symmetric { "symmetric" } else { "general" },
        a.dim(),
        a.dim(),
        entries.len()
    ));
    for (i, j, v) in entries {
        out.push_str(&format!("{} {} {:e}\n", i + 1, j + 1, v));
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(out.as_bytes()).map_err(io_err(path))
}

/// Writes in array (column-major, general) format.
pub fn write_dense_matrix_market(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("%%MatrixMarket matrix array real general\n{} {}\n", m.nrows(), m.ncols());
    for v in m.iter() {
        out.push_str(&format!("{v:e}\n"));
    }
    fs::write(path, out).map_err(io_err(path))
}
