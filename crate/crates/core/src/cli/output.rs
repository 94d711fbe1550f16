//! CSV and SVG writers.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Nine significant digits, scientific notation, locale independent.
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    format!("{v:.8e}")
}

/// Column-oriented table with a header row.
pub struct Table {
    pub header: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(header: &[&str], columns: Vec<Vec<f64>>) -> Self {
        debug_assert_eq!(header.len(), columns.len());
        Self { header: header.iter().map(|s| s.to_string()).collect(), columns }
    }

    pub fn to_csv(&self) -> String {
        let rows = self.columns.iter().map(Vec::len).max().unwrap_or(0);
        let mut out = self.header.join(",");
        out.push('\n');
        for r in 0..rows {
            let line: Vec<String> =
                self.columns.iter().map(|c| c.get(r).map_or_else(String::new, |v| fmt_num(*v))).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<PathBuf> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(path.to_path_buf())
}

/// Parse a CSV with a header row into named numeric columns.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    parse_csv(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

pub fn parse_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Data("empty file".into()))?
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    let mut columns = vec![Vec::new(); header.len()];
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::Data(format!("row {} has {} cells, header has {}", i + 2, cells.len(), header.len())));
        }
        for (c, cell) in cells.iter().enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("row {}: '{}' is not a number", i + 2, cell.trim())))?;
            columns[c].push(v);
        }
    }
    Ok((header, columns))
}

pub struct Series<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

const COLORS: [&str; 6] = ["#c0392b", "#2471a3", "#1e8449", "#7d3c98", "#b9770e", "#555555"];

/// Minimal line plot: axes with end labels, one polyline per series, dashed
/// vertical guides and a legend.
pub fn line_plot(title: &str, x_label: &str, series: &[Series], guides: &[f64]) -> String {
    let (w, h, m) = (720.0, 440.0, 60.0);
    let finite = |v: &&f64| v.is_finite();
    let xs = series.iter().flat_map(|s| s.x.iter()).filter(finite);
    let ys = series.iter().flat_map(|s| s.y.iter()).filter(finite);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    let (mut y0, mut y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if !(y1 > y0) {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let x1 = if x1 > x0 { x1 } else { x0 + 1.0 };
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(s, r#"<path d="M{m} {m} V{b} H{r}" fill="none" stroke="black"/>"#, b = h - m, r = w - m);
    let _ = writeln!(s, r#"<text x="{m}" y="{}" text-anchor="middle">{}</text>"#, h - m + 16.0, fmt_tick(x0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w - m, h - m + 16.0, fmt_tick(x1));
    let _ =
        writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, w / 2.0, h - m + 32.0, escape(x_label));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, m - 4.0, h - m, fmt_tick(y0));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, m - 4.0, m + 4.0, fmt_tick(y1));
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(s, r##"<path d="M{m} {z:.2} H{r}" stroke="#bbbbbb"/>"##, z = py(0.0), r = w - m);
    }
    for g in guides.iter().filter(|g| (x0..=x1).contains(*g)) {
        let _ =
            writeln!(s, r#"<path d="M{x:.2} {m} V{b}" stroke="gray" stroke-dasharray="4 4"/>"#, x = px(*g), b = h - m);
    }
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for (k, (x, y)) in ser.x.iter().zip(ser.y).filter(|(x, y)| x.is_finite() && y.is_finite()).enumerate() {
            let _ = write!(d, "{}{:.2} {:.2}", if k == 0 { "M" } else { " L" }, px(*x), py(*y));
        }
        let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#);
        let ly = m + 16.0 * i as f64;
        let _ = writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}">{}</text>"#, w - m - 120.0, escape(ser.label));
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    format!("{v:.3e}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
