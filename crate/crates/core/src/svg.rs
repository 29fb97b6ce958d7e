//! Minimal SVG charts rendered straight from the CSV artifacts.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const TICKS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChartKind {
    /// First column on the x axis, second column as a polyline.
    Line,
    /// `bin_left,bin_right,density` rows as bars.
    Histogram,
}

impl FromStr for ChartKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "line" => Ok(ChartKind::Line),
            "histogram" => Ok(ChartKind::Histogram),
            other => Err(Error::invalid("kind", format!("expected line or histogram, got '{other}'"))),
        }
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn parse_csv(csv: &str) -> Result<Table> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Schema("missing header row".into()))?
        .split(',')
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Schema(format!("row {}: non-numeric value '{v}'", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if row.len() != header.len() {
            return Err(Error::Schema(format!(
                "row {}: {} fields, header has {}",
                i + 1,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok(Table { header, rows })
}

#[derive(Clone, Copy)]
struct Range {
    lo: f64,
    hi: f64,
}

impl Range {
    fn of(values: impl Iterator<Item = f64>) -> Range {
        let (lo, hi) = values
            .filter(|v| v.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            return Range { lo: 0.0, hi: 1.0 };
        }
        if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
            let pad = 0.5 * lo.abs().max(1.0);
            return Range { lo: lo - pad, hi: hi + pad };
        }
        Range { lo, hi }
    }

    fn with_zero(self) -> Range {
        Range {
            lo: self.lo.min(0.0),
            hi: self.hi.max(0.0),
        }
    }
}

struct Frame {
    x: Range,
    y: Range,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.lo) / (self.x.hi - self.x.lo) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y.lo) / (self.y.hi - self.y.lo) * (HEIGHT - TOP - BOTTOM)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-2 {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str, title: &str) {
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<path d="M{x0:.1},{y1:.1} V{y0:.1} H{x1:.1}" fill="none" stroke="black"/>"#
    );
    for i in 0..=TICKS {
        let r = i as f64 / TICKS as f64;
        let xv = f.x.lo + r * (f.x.hi - f.x.lo);
        let yv = f.y.lo + r * (f.y.hi - f.y.lo);
        let (px, py) = (f.px(xv), f.py(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{px:.1}" y1="{y0:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
            y0 + 5.0,
            y0 + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{x0:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end" font-size="11">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="13">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 10.0,
        escape(xlabel)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" font-size="13" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(ylabel)
    );
}

/// Renders a CSV artifact as an SVG document. Empty data yields the axes
/// alone; a header that does not fit `kind` is a schema error.
pub fn emit_svg(csv: &str, kind: ChartKind, title: &str) -> Result<String> {
    let table = parse_csv(csv)?;
    let mut body = String::new();
    let (frame, xlabel, ylabel) = match kind {
        ChartKind::Histogram => {
            let expected = ["bin_left", "bin_right", "density"];
            if table.header != expected {
                return Err(Error::Schema(format!(
                    "histogram needs header {}, got {}",
                    expected.join(","),
                    table.header.join(",")
                )));
            }
            let frame = Frame {
                x: Range::of(table.rows.iter().flat_map(|r| [r[0], r[1]])),
                y: Range::of(table.rows.iter().map(|r| r[2])).with_zero(),
            };
            for r in &table.rows {
                if !r[2].is_finite() {
                    continue;
                }
                let (xl, xr) = (frame.px(r[0]), frame.px(r[1]));
                let (yt, yb) = (frame.py(r[2]), frame.py(0.0));
                let _ = writeln!(
                    body,
                    r##"<rect x="{xl:.2}" y="{yt:.2}" width="{:.2}" height="{:.2}" fill="#4a7ab5" stroke="#2b4a70" stroke-width="0.5"/>"##,
                    xr - xl,
                    yb - yt
                );
            }
            (frame, "x".to_string(), "density".to_string())
        }
        ChartKind::Line => {
            if table.header.len() < 2 {
                return Err(Error::Schema(format!(
                    "line chart needs at least two columns, got {}",
                    table.header.join(",")
                )));
            }
            let frame = Frame {
                x: Range::of(table.rows.iter().map(|r| r[0])),
                y: Range::of(table.rows.iter().map(|r| r[1])),
            };
            let points: Vec<String> = table
                .rows
                .iter()
                .filter(|r| r[0].is_finite() && r[1].is_finite())
                .map(|r| format!("{:.2},{:.2}", frame.px(r[0]), frame.py(r[1])))
                .collect();
            if !points.is_empty() {
                let _ = writeln!(
                    body,
                    r##"<polyline fill="none" stroke="#1f4e8c" stroke-width="1.2" points="{}"/>"##,
                    points.join(" ")
                );
            }
            (frame, table.header[0].clone(), table.header[1].clone())
        }
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    axes(&mut out, &frame, &xlabel, &ylabel, title);
    out.push_str(&body);
    out.push_str("</svg>\n");
    Ok(out)
}
