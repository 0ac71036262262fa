//! Small strict readers and writers for the CSV interchange formats.
//!
//! These parse untrusted input, so they must never panic: malformed rows
//! produce errors. The fuzz targets under `fuzz/` hammer each entry point.

use std::path::Path;

use crate::error::{Error, Result};

/// 17 significant digits: enough to reproduce any f64 bit pattern on parse.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_field(tok: &str, line_no: usize) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| Error::schema(format!("line {line_no}: '{tok}' is not a number")))?;
    if !v.is_finite() {
        return Err(Error::schema(format!("line {line_no}: non-finite value")));
    }
    Ok(v)
}

/// Parse a numeric CSV table with a fixed column count per row. A single
/// non-numeric header row is permitted and skipped. Empty lines and `#`
/// comment lines are ignored.
fn parse_table(text: &str, expect_cols: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut cols: Option<usize> = expect_cols;
    const MAX_ROWS: usize = 1 << 22;
    const MAX_COLS: usize = 1 << 10;
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() > MAX_COLS {
            return Err(Error::schema(format!("line {line_no}: too many columns")));
        }
        // Allow one header row of labels.
        if rows.is_empty() && fields.iter().any(|f| f.trim().parse::<f64>().is_err()) {
            if idx == 0 || cols.is_none() {
                if let Some(c) = cols {
                    if fields.len() != c {
                        return Err(Error::schema(format!(
                            "line {line_no}: header has {} columns, expected {c}",
                            fields.len()
                        )));
                    }
                }
                cols = cols.or(Some(fields.len()));
                continue;
            }
        }
        let row: Vec<f64> = fields
            .iter()
            .map(|tok| parse_field(tok, line_no))
            .collect::<Result<_>>()?;
        match cols {
            Some(c) if row.len() != c => {
                return Err(Error::schema(format!(
                    "line {line_no}: {} columns, expected {c}",
                    row.len()
                )));
            }
            None => cols = Some(row.len()),
            _ => {}
        }
        rows.push(row);
        if rows.len() > MAX_ROWS {
            return Err(Error::schema("too many rows"));
        }
    }
    Ok(rows)
}

/// Sample points, one point per row: `x1,..,xn`. Optional `x1..xn` header.
pub fn parse_samples_csv(text: &str, dim: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let rows = parse_table(text, dim)?;
    if rows.is_empty() {
        return Err(Error::schema("no sample rows"));
    }
    Ok(rows)
}

/// Point pairs, one pair per row: `p1,..,pn,q1,..,qn`.
pub fn parse_pairs_csv(text: &str, dim: Option<usize>) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let rows = parse_table(text, dim.map(|n| 2 * n))?;
    if rows.is_empty() {
        return Err(Error::schema("no pair rows"));
    }
    let cols = rows[0].len();
    if cols % 2 != 0 || cols == 0 {
        return Err(Error::schema(format!(
            "pair rows need an even column count, got {cols}"
        )));
    }
    let n = cols / 2;
    Ok(rows
        .into_iter()
        .map(|r| (r[..n].to_vec(), r[n..].to_vec()))
        .collect())
}

pub fn write_samples_csv(points: &[Vec<f64>]) -> String {
    let n = points.first().map(|p| p.len()).unwrap_or(0);
    let mut out = (1..=n)
        .map(|j| format!("x{j}"))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for p in points {
        let row = p.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",");
        out.push_str(&row);
        out.push('\n');
    }
    out
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(parent.display().to_string(), e))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parse `"a,b,c"` into a coordinate vector.
pub fn parse_point(text: &str) -> Result<Vec<f64>> {
    let v: Vec<f64> = text
        .split(',')
        .map(|tok| parse_field(tok, 1))
        .collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(Error::schema("empty point"));
    }
    Ok(v)
}
