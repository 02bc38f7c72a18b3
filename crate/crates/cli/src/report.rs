//! Plain-text reports: CSV tables, aligned markdown and minimal SVG charts.

use std::fmt::Write as _;
use std::path::Path;

use psp_core::metrics::MetricReport;

use crate::error::{CliError, CliResult};

pub const METRIC_COLUMNS: [&str; 4] = ["srocc", "plcc", "krocc", "mse"];

pub fn metric_values(r: &MetricReport<f64>) -> [f64; 4] {
    [r.srocc, r.plcc, r.krocc, r.mse]
}

/// A table kept as strings so that CSV and markdown renderings agree.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Table {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> CliResult<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let fail = |e: csv::Error| CliError::internal(e.to_string());
        w.write_record(&self.header).map_err(fail)?;
        for r in &self.rows {
            w.write_record(r).map_err(fail)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::internal(e.to_string()))
    }

    /// Markdown with columns padded to a common width. Cells that parse as
    /// numbers are rounded to `digits` places and right-aligned.
    pub fn to_markdown(&self, digits: usize) -> String {
        let float_column: Vec<bool> = (0..self.header.len())
            .map(|j| self.rows.iter().any(|r| r[j].parse::<f64>().is_ok() && (r[j].contains('.') || r[j].contains('e'))))
            .collect();
        let cells: Vec<Vec<(String, bool)>> = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .zip(&float_column)
                    .map(|(c, &float)| match c.parse::<f64>() {
                        Ok(v) if float => (format!("{v:.digits$}"), true),
                        Ok(_) => (c.clone(), true),
                        Err(_) => (c.clone(), false),
                    })
                    .collect()
            })
            .collect();
        let mut width: Vec<usize> = self.header.iter().map(|h| h.len().max(3)).collect();
        for r in &cells {
            for (w, (c, _)) in width.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let numeric: Vec<bool> = (0..width.len())
            .map(|j| !cells.is_empty() && cells.iter().all(|r| r[j].1))
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, items: Vec<String>| {
            out.push('|');
            for s in items {
                let _ = write!(out, " {s} |");
            }
            out.push('\n');
        };
        line(
            &mut out,
            self.header
                .iter()
                .zip(&width)
                .map(|(h, &w)| format!("{h:<w$}"))
                .collect(),
        );
        line(
            &mut out,
            width
                .iter()
                .zip(&numeric)
                .map(|(&w, &num)| {
                    if num {
                        format!("{}:", "-".repeat(w - 1))
                    } else {
                        "-".repeat(w)
                    }
                })
                .collect(),
        );
        for r in &cells {
            line(
                &mut out,
                r.iter()
                    .zip(&width)
                    .zip(&numeric)
                    .map(|(((c, _), &w), &num)| if num { format!("{c:>w$}") } else { format!("{c:<w$}") })
                    .collect(),
            );
        }
        out
    }
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub struct Series<'a> {
    pub name: &'a str,
    pub ys: Vec<f64>,
}

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Line chart of each series against `xs`.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, xs: &[f64], series: &[Series<'_>]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 70.0, 130.0, 40.0, 55.0);
    let finite = |v: &&f64| v.is_finite();
    let (x_lo, x_hi) = bounds(xs.iter().filter(finite).copied());
    let (y_lo, y_hi) = bounds(series.iter().flat_map(|s| s.ys.iter().filter(finite).copied()));
    let px = |x: f64| left + (x - x_lo) / (x_hi - x_lo) * (w - left - right);
    let py = |y: f64| h - bottom - (y - y_lo) / (y_hi - y_lo) * (h - top - bottom);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(
        s,
        r#"<path d="M{left} {top} L{left} {b} L{r} {b}" fill="none" stroke="black"/>"#,
        b = h - bottom,
        r = w - right
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let (xv, yv) = (x_lo + t * (x_hi - x_lo), y_lo + t * (y_hi - y_lo));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(xv),
            h - bottom + 18.0,
            tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            left - 6.0,
            py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
        (left + w - right) / 2.0,
        h - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (top + h - bottom) / 2.0,
        (top + h - bottom) / 2.0,
        escape(y_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = xs
            .iter()
            .zip(&ser.ys)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        for p in &points {
            let (cx, cy) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(s, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 16.0 * k as f64 + 8.0;
        let lx = w - right + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(ser.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick(v: f64) -> String {
    format!("{v:.3}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
