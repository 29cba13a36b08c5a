//! CSV tables and optional SVG line plots.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::tensor::format_f64;

pub enum Cell {
    Num(f64),
    Int(usize),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) if v.is_nan() => "nan".into(),
            Cell::Num(v) => format_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }

    fn value(&self) -> Option<f64> {
        match self {
            Cell::Num(v) => Some(*v),
            Cell::Int(v) => Some(*v as f64),
            _ => None,
        }
    }
}

pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub comments: Vec<String>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new(), comments: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.comments {
            let _ = writeln!(s, "# {c}");
        }
        let _ = writeln!(s, "{}", self.columns.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            let _ = writeln!(s, "{}", cells.join(","));
        }
        s
    }

    fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Line plot of the numeric columns `ys` against `x`, one polyline per
    /// column (and per value of `group`, when given).
    pub fn svg(&self, x: &str, ys: &[&str], group: Option<&str>, log_y: bool) -> Option<String> {
        let xi = self.column(x)?;
        let gi = group.and_then(|g| self.column(g));
        let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
        for y in ys {
            let yi = self.column(y)?;
            for row in &self.rows {
                let (Some(px), Some(py)) = (row[xi].value(), row[yi].value()) else { continue };
                if !px.is_finite() || !py.is_finite() || (log_y && py <= 0.0) {
                    continue;
                }
                let label = match gi {
                    Some(g) => format!("{y} {}", row[g].render()),
                    None => y.to_string(),
                };
                let py = if log_y { py.log10() } else { py };
                match series.iter_mut().find(|(l, _)| *l == label) {
                    Some((_, pts)) => pts.push((px, py)),
                    None => series.push((label, vec![(px, py)])),
                }
            }
        }
        let pts = series.iter().flat_map(|(_, p)| p.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(px, py) in pts {
            x0 = x0.min(px);
            x1 = x1.max(px);
            y0 = y0.min(py);
            y1 = y1.max(py);
        }
        if !(x1 > x0) {
            return None;
        }
        if !(y1 > y0) {
            y1 = y0 + 1.0;
        }
        let (w, h, m) = (640.0, 400.0, 50.0);
        let sx = |v: f64| m + (v - x0) / (x1 - x0) * (w - 2.0 * m);
        let sy = |v: f64| h - m - (v - y0) / (y1 - y0) * (h - 2.0 * m);
        let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">"#);
        let _ = writeln!(
            s,
            r#"<rect x="{m}" y="{m}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            w - 2.0 * m,
            h - 2.0 * m
        );
        let ylabel = if log_y { "log10" } else { "" };
        let _ = writeln!(s, r#"<text x="{m}" y="{}" font-size="11">{x}: {x0:.4e} .. {x1:.4e}</text>"#, h - 15.0);
        let _ = writeln!(s, r#"<text x="{m}" y="20" font-size="11">{ylabel} y: {y0:.4e} .. {y1:.4e}</text>"#);
        for (k, (label, p)) in series.iter().enumerate() {
            let color = colors[k % colors.len()];
            let coords: Vec<String> = p.iter().map(|&(a, b)| format!("{:.2},{:.2}", sx(a), sy(b))).collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" points="{}"/>"#,
                coords.join(" ")
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" font-size="11" fill="{color}">{label}</text>"#,
                w - m - 120.0,
                m + 15.0 * (k + 1) as f64
            );
        }
        s.push_str("</svg>\n");
        Some(s)
    }
}

/// Write `text` to `dir/name`, or to stdout when no directory is given.
pub fn emit(dir: Option<&Path>, name: &str, text: &str) -> Result<Option<PathBuf>> {
    match dir {
        Some(d) => {
            std::fs::create_dir_all(d)?;
            let path = d.join(name);
            std::fs::write(&path, text)?;
            Ok(Some(path))
        }
        None => {
            print!("{text}");
            Ok(None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_fixed_precision() {
        let mut t = Table::new(&["a", "b"]);
        t.comments.push("hello".into());
        t.push(vec![0.1.into(), f64::NAN.into()]);
        assert_eq!(t.render(), "# hello\na,b\n1.0000000000000001e-1,nan\n");
    }

    #[test]
    fn svg_has_one_line_per_series() {
        let mut t = Table::new(&["x", "y", "z"]);
        for i in 0..4 {
            t.push(vec![(i as f64).into(), (i as f64 * 2.0).into(), 1.0.into()]);
        }
        let s = t.svg("x", &["y", "z"], None, false).unwrap();
        assert_eq!(s.matches("<polyline").count(), 2);
    }
}
