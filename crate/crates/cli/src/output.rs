//! CSV tables and SVG line charts.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("table is not rectangular: row {row} has {got} cells, header has {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("plot: {0}")]
    Plot(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Flag(bool),
}

impl Cell {
    /// Shortest decimal that parses back to the same `f64`.
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => format!("{v}"),
            Cell::Int(v) => v.to_string(),
            Cell::Flag(v) => v.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Flag(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        self.rows.push(row);
    }

    fn check(&self) -> Result<(), OutputError> {
        for (i, row) in self.rows.iter().enumerate() {
            if row.len() != self.header.len() {
                return Err(OutputError::Ragged {
                    row: i,
                    got: row.len(),
                    expected: self.header.len(),
                });
            }
        }
        Ok(())
    }

    pub fn to_csv_bytes(&self) -> Result<Vec<u8>, OutputError> {
        self.check()?;
        let csv_err = |source| OutputError::Csv {
            path: "<memory>".into(),
            source,
        };
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        w.into_inner().map_err(|e| OutputError::Io {
            path: "<memory>".into(),
            source: e.into_error(),
        })
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), OutputError> {
    std::fs::write(path, bytes).map_err(|source| OutputError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn emit_csv(table: &Table, path: &Path) -> Result<(), OutputError> {
    write_bytes(path, &table.to_csv_bytes()?)
}

/// Reads back a numeric CSV written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), OutputError> {
    let csv_err = |source| OutputError::Csv {
        path: path.display().to_string(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record.map_err(csv_err)?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f64>()
                    .map_err(|e| OutputError::Plot(format!("{}: field {field:?}: {e}", path.display())))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self {
            label: label.into(),
            points,
        }
    }
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
const DASHES: [&str; 3] = ["none", "8 4", "2 3"];

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Data range widened to a non-degenerate interval.
fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

/// Line chart with one polyline per series on a fixed 800x600 canvas.
pub fn svg_plot(series: &[Series], title: &str, x_label: &str, y_label: &str) -> Result<String, OutputError> {
    if series.is_empty() {
        return Err(OutputError::Plot("no series to plot".into()));
    }
    for s in series {
        if s.points.len() < 2 {
            return Err(OutputError::Plot(format!(
                "series \"{}\" has {} point(s), need at least 2",
                s.label,
                s.points.len()
            )));
        }
        if let Some((t, v)) = s.points.iter().find(|(t, v)| !t.is_finite() || !v.is_finite()) {
            return Err(OutputError::Plot(format!("series \"{}\" has non-finite point ({t}, {v})", s.label)));
        }
    }
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = span(all().map(|p| p.0));
    let (y0, y1) = span(all().map(|p| p.1));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    let (bx, by) = (TOP + plot_h, LEFT);
    let _ = writeln!(
        out,
        r#"<g stroke="black" stroke-width="1"><line x1="{LEFT}" y1="{bx}" x2="{}" y2="{bx}"/><line x1="{by}" y1="{TOP}" x2="{by}" y2="{bx}"/></g>"#,
        LEFT + plot_w
    );
    let _ = writeln!(out, r#"<g font-family="sans-serif" font-size="11">"#);
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            out,
            r#"<line x1="{px:.2}" y1="{bx}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{xv:.4}</text>"#,
            bx + 5.0,
            bx + 18.0
        );
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{py:.2}" x2="{by}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{yv:.4e}</text>"#,
            by - 5.0,
            by - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(y_label)
    );
    let _ = writeln!(out, "</g>");

    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let dash = DASHES[(i / COLORS.len()) % DASHES.len()];
        let mut pts = String::with_capacity(s.points.len() * 16);
        for (j, &(t, v)) in s.points.iter().enumerate() {
            if j > 0 {
                pts.push(' ');
            }
            let _ = write!(pts, "{:.2},{:.2}", sx(t), sy(v));
        }
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" stroke-dasharray="{dash}" points="{pts}"/>"#
        );
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let lx = LEFT + plot_w - 150.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="1.5" stroke-dasharray="{dash}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

pub fn emit_svg_plot(series: &[Series], title: &str, x_label: &str, y_label: &str, path: &Path) -> Result<(), OutputError> {
    write_bytes(path, svg_plot(series, title, x_label, y_label)?.as_bytes())
}
