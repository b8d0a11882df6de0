//! Text formats for scalar and matrix inputs and outputs.
//!
//! A matrix is written as its dimension d on one line followed by d rows of
//! d whitespace-separated numbers. Matrices are separated by blank lines.
//! Lines starting with `#` are ignored, so report headers can precede data.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde_json::Value;

use super::JobError;
use crate::linalg::{SpdMatrix, MAX_DIM};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_scalar(x: f64) -> String {
    format!("{x:.16e}")
}

/// One value per line.
pub fn format_scalars(xs: &[f64]) -> String {
    xs.iter().map(|&x| format_scalar(x) + "\n").collect()
}

pub fn format_matrix(m: &SpdMatrix) -> String {
    let d = m.dim();
    let mut out = format!("{d}\n");
    for i in 0..d {
        let row: Vec<String> = (0..d).map(|j| format_scalar(m.matrix()[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

pub fn format_matrices(ms: &[SpdMatrix]) -> String {
    ms.iter().map(format_matrix).collect::<Vec<_>>().join("\n")
}

/// Rows of the matrix as a JSON array of arrays.
pub fn matrix_json(m: &DMatrix<f64>) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| Value::from(m[(i, j)])).collect()))
            .collect(),
    )
}

fn is_comment(line: &str) -> bool {
    line.trim_start().starts_with('#')
}

fn number(tok: &str, line_no: usize) -> Result<f64, JobError> {
    tok.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| JobError::Parse(format!("line {line_no}: {tok:?} is not a finite number")))
}

/// Whitespace- or comma-separated numbers.
pub fn parse_scalars(text: &str) -> Result<Vec<f64>, JobError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if is_comment(line) {
            continue;
        }
        for tok in line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
        {
            out.push(number(tok, i + 1)?);
        }
    }
    Ok(out)
}

/// Parses every matrix in `text` and validates each as positive definite.
pub fn parse_matrices(text: &str) -> Result<Vec<SpdMatrix>, JobError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !is_comment(l))
        .peekable();
    let mut out = Vec::new();
    loop {
        while lines.next_if(|(_, l)| l.is_empty()).is_some() {}
        let Some((line_no, head)) = lines.next() else {
            break;
        };
        let dim: usize =
            head.parse().ok().filter(|&d| d >= 1).ok_or_else(|| {
                JobError::Parse(format!("line {line_no}: expected a matrix dimension, found {head:?}"))
            })?;
        if dim > MAX_DIM {
            return Err(JobError::Parse(format!(
                "line {line_no}: dimension {dim} exceeds the limit {MAX_DIM}"
            )));
        }
        let mut entries = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            let (row_no, row) = lines.next().filter(|(_, l)| !l.is_empty()).ok_or_else(|| {
                JobError::Parse(format!(
                    "matrix {} (line {line_no}): expected {dim} rows, found {r}",
                    out.len()
                ))
            })?;
            let values: Vec<f64> = row
                .split_whitespace()
                .map(|t| number(t, row_no))
                .collect::<Result<_, _>>()?;
            if values.len() != dim {
                return Err(JobError::Parse(format!(
                    "line {row_no}: expected {dim} entries, found {}",
                    values.len()
                )));
            }
            entries.extend(values);
        }
        let m = SpdMatrix::from_rows(dim, &entries)
            .map_err(|e| JobError::Parse(format!("matrix {} (line {line_no}): {e}", out.len())))?;
        out.push(m);
    }
    Ok(out)
}

pub fn parse_matrix_file(path: &Path) -> Result<Vec<SpdMatrix>, JobError> {
    let text = std::fs::read_to_string(path).map_err(|e| JobError::Io(format!("{}: {e}", path.display())))?;
    parse_matrices(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_file() {
        let ms = parse_matrices("2\n1 0\n0 1\n").unwrap();
        assert_eq!(ms, vec![SpdMatrix::identity(2)]);
    }

    #[test]
    fn several_matrices_with_comments() {
        let text = "# header\n1\n2\n\n\n2\n2 1\n1 2\n";
        let ms = parse_matrices(text).unwrap();
        assert_eq!(ms.len(), 2);
        assert_eq!(ms[1].matrix()[(0, 1)], 1.0);
    }

    #[test]
    fn empty_file_gives_no_matrices() {
        assert!(parse_matrices("").unwrap().is_empty());
        assert!(parse_matrices("\n# nothing\n\n").unwrap().is_empty());
    }

    #[test]
    fn errors_name_the_place() {
        let e = parse_matrices("2\n1 0\n0 x\n").unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        let e = parse_matrices("2\n1 0\n").unwrap_err().to_string();
        assert!(e.contains("expected 2 rows"), "{e}");
        let e = parse_matrices("1\n1\n\n2\n1 2\n2 1\n").unwrap_err().to_string();
        assert!(e.contains("matrix 1") && e.contains("eigenvalue"), "{e}");
        assert!(parse_matrices("2\n1 0 0\n0 1\n").is_err());
        assert!(parse_matrices("0\n").is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let m = SpdMatrix::from_rows(2, &[0.1 + 0.2, 1.0 / 3.0, 1.0 / 3.0, 2.0f64.sqrt()]).unwrap();
        let back = parse_matrices(&format_matrices(&[m.clone(), m.clone()])).unwrap();
        assert_eq!(back, vec![m.clone(), m]);
        let xs = [0.1, 1e-300, 2.5];
        assert_eq!(parse_scalars(&format_scalars(&xs)).unwrap(), xs);
    }

    #[test]
    fn scalars_accept_commas() {
        assert_eq!(parse_scalars("1, 2\n3 4\n").unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert!(parse_scalars("1 nan").is_err());
    }
}
