//! Delimited text files: sampled nilmanifold functions and lists of complex points.
//!
//! A function file has a header row `x1,..,xn,u1,..,un,xi,re,im` (names are free, the
//! column count fixes `n`) and one row per node of the grid on `[0,1)^{2n} × [0,½)`, in
//! any order. `#` starts a comment line.

use std::fmt;

use nilheat::heisenberg::CGroupPoint;
use nilheat::nilmanifold::{manifold_grid, ManifoldFunction};
use nilheat::numerics::SampledField;
use nilheat::C64;

#[derive(Debug, Clone, PartialEq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for ParseError {}

fn perr(line: usize, message: impl Into<String>) -> ParseError {
    ParseError {
        line,
        message: message.into(),
    }
}

/// Numeric rows after the header, with their 1-based line numbers.
fn numeric_rows(text: &str) -> Result<(usize, Vec<(usize, Vec<f64>)>), ParseError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or_else(|| perr(1, "empty file"))?;
    let cols = header.split(',').count();
    if header.split(',').any(|h| h.trim().parse::<f64>().is_ok()) {
        return Err(perr(hline, "expected a header row naming the columns"));
    }
    let mut rows = Vec::new();
    for (no, l) in lines {
        let vals = l
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| perr(no, format!("{v:?}: {e}"))))
            .collect::<Result<Vec<f64>, ParseError>>()?;
        if vals.len() != cols {
            return Err(perr(no, format!("expected {cols} columns, found {}", vals.len())));
        }
        rows.push((no, vals));
    }
    Ok((cols, rows))
}

pub fn parse_manifold_function(text: &str) -> Result<ManifoldFunction, ParseError> {
    let (cols, rows) = numeric_rows(text)?;
    if cols < 5 || (cols - 3) % 2 != 0 {
        return Err(perr(1, format!("{cols} columns do not match x,u,xi,re,im for any n")));
    }
    let n = (cols - 3) / 2;
    let count = |axis: usize| {
        let mut v: Vec<f64> = rows.iter().map(|(_, r)| r[axis]).collect();
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
        v.len()
    };
    let p = count(0);
    let q = count(2 * n);
    let grid = manifold_grid(n, p, q).map_err(|e| perr(1, e.to_string()))?;
    if rows.len() != grid.len() {
        return Err(perr(
            rows.last().map_or(1, |r| r.0),
            format!("{} rows, but a {p}^{} x {q} grid needs {}", rows.len(), 2 * n, grid.len()),
        ));
    }
    let mut values = vec![None; grid.len()];
    let strides = grid.strides();
    for (no, r) in &rows {
        let mut flat = 0;
        for axis in 0..=2 * n {
            let h = grid.spacing(axis);
            let pos = r[axis] / h;
            let idx = pos.round();
            if (pos - idx).abs() > 1e-6 || idx < 0.0 || idx as usize >= grid.points()[axis] {
                return Err(perr(*no, format!("coordinate {} is not a node of axis {axis}", r[axis])));
            }
            flat += idx as usize * strides[axis];
        }
        if values[flat].is_some() {
            return Err(perr(*no, "node listed twice"));
        }
        values[flat] = Some(C64::new(r[cols - 2], r[cols - 1]));
    }
    let values: Vec<C64> = values.into_iter().map(|v| v.expect("every node filled")).collect();
    let field = SampledField::new(grid, values).map_err(|e| perr(1, e.to_string()))?;
    ManifoldFunction::new(n, field).map_err(|e| perr(1, e.to_string()))
}

/// Writes `f` in the format [`parse_manifold_function`] reads.
pub fn format_manifold_function(f: &ManifoldFunction) -> String {
    let n = f.n();
    let mut names: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    names.extend((1..=n).map(|i| format!("u{i}")));
    names.extend(["xi".to_string(), "re".to_string(), "im".to_string()]);
    let mut out = names.join(",");
    out.push('\n');
    let g = f.field().grid();
    for (flat, v) in f.field().values().iter().enumerate() {
        let c: Vec<String> = g.coords_of(flat).iter().map(|x| x.to_string()).collect();
        out.push_str(&format!("{},{},{}\n", c.join(","), v.re, v.im));
    }
    out
}

/// Rows of `2(2n+1)` numbers: real and imaginary parts of `z`, then `w`, then `ζ`.
pub fn parse_points(text: &str, n: usize) -> Result<Vec<CGroupPoint>, ParseError> {
    let (cols, rows) = numeric_rows(text)?;
    if cols != 2 * (2 * n + 1) {
        return Err(perr(1, format!("expected {} columns for n = {n}, found {cols}", 2 * (2 * n + 1))));
    }
    rows.iter()
        .map(|(no, r)| {
            let cs: Vec<C64> = r.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
            CGroupPoint::new(cs[..n].to_vec(), cs[n..2 * n].to_vec(), cs[2 * n]).map_err(|e| perr(*no, e.to_string()))
        })
        .collect()
}
