//! Deterministic SVG plots from the CSV files the runner writes.
//!
//! The viewport is fixed and every number is printed with a fixed number of
//! decimals, so identical input gives byte-identical output.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use isl_core::distributions::Density1D;

use crate::error::{CliError, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 50.0;
/// Density levels of a contour plot, as fractions of the grid maximum.
const CONTOUR_LEVELS: [f64; 6] = [0.05, 0.15, 0.3, 0.5, 0.7, 0.9];
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    DensityOverlay,
    LossCurve,
    Contour,
}

impl PlotKind {
    pub fn header(self) -> &'static [&'static str] {
        match self {
            Self::DensityOverlay => &["x", "p_hat"],
            Self::LossCurve => &["epoch", "loss", "wallclock_s"],
            Self::Contour => &["x", "y", "p_hat"],
        }
    }
}

impl FromStr for PlotKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "density-overlay" => Ok(Self::DensityOverlay),
            "loss-curve" => Ok(Self::LossCurve),
            "contour" => Ok(Self::Contour),
            _ => Err(CliError::Config(format!("unknown plot kind '{s}'"))),
        }
    }
}

/// Reads a numeric CSV whose header must equal `header`.
pub fn read_columns(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let schema = |message: String| CliError::Schema {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => CliError::io(path, std::io::Error::other(e.to_string())),
        _ => CliError::Csv(e),
    })?;
    let found: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(schema(format!("expected header {}, found {}", header.join(","), found.join(","))));
    }
    let mut columns = vec![Vec::new(); header.len()];
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| schema(format!("row {}: '{field}' is not a number", i + 1)))?;
            columns[c].push(v);
        }
    }
    if columns[0].is_empty() {
        return Err(schema("no data rows".into()));
    }
    Ok(columns)
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }

    fn open(&self, title: &str, xlabel: &str, ylabel: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{}" y="25" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#, WIDTH / 2.0, escape(title));
        let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
        let _ = writeln!(s, r#"<polyline points="{l},{t} {l},{b} {r},{b}" fill="none" stroke="black"/>"#);
        let ticks = [(self.x.0, l, b + 15.0, "middle"), (self.x.1, r, b + 15.0, "middle")];
        for (v, x, y, anchor) in ticks {
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{v:.4}</text>"#);
        }
        for (v, y) in [(self.y.0, b), (self.y.1, t)] {
            let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-family="sans-serif" font-size="11">{v:.4}</text>"#, l - 4.0, y + 4.0);
        }
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#, WIDTH / 2.0, HEIGHT - 12.0, escape(xlabel));
        let _ = writeln!(s, r#"<text x="14" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 14 {})">{}</text>"#, HEIGHT / 2.0, HEIGHT / 2.0, escape(ylabel));
        s
    }

    fn polyline(&self, xs: &[f64], ys: &[f64], color: &str) -> String {
        let points: Vec<String> = xs
            .iter()
            .zip(ys)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.2},{:.2}", self.px(x), self.py(y)))
            .collect();
        format!(r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, points.join(" ")) + "\n"
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn legend(entries: &[(&str, &str)]) -> String {
    let mut s = String::new();
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = MARGIN + 15.0 * i as f64 + 5.0;
        let x = WIDTH - MARGIN - 140.0;
        let _ = writeln!(s, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#, x + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#, x + 25.0, y + 4.0, escape(label));
    }
    s
}

/// Estimated density from `x,p_hat` columns, optionally over the analytic
/// density of `truth`.
pub fn density_overlay(columns: &[Vec<f64>], truth: Option<&Density1D>, title: &str) -> String {
    let (xs, est) = (&columns[0], &columns[1]);
    let true_ys: Option<Vec<f64>> = truth.map(|d| xs.iter().map(|&x| d.pdf(x)).collect());
    let mut all_y: Vec<f64> = est.clone();
    if let Some(t) = &true_ys {
        all_y.extend(t);
    }
    let (_, ymax) = span(all_y.into_iter());
    let frame = Frame {
        x: span(xs.iter().copied()),
        y: (0.0, ymax.max(1e-12)),
    };
    let mut s = frame.open(title, "x", "density");
    let mut entries = Vec::new();
    if let Some(t) = &true_ys {
        s += &frame.polyline(xs, t, COLORS[0]);
        entries.push(("true", COLORS[0]));
    }
    s += &frame.polyline(xs, est, COLORS[1]);
    entries.push(("estimate", COLORS[1]));
    s += &legend(&entries);
    s + "</svg>\n"
}

pub fn loss_curve(columns: &[Vec<f64>], title: &str) -> String {
    let (epochs, loss) = (&columns[0], &columns[1]);
    let frame = Frame {
        x: span(epochs.iter().copied()),
        y: span(loss.iter().copied()),
    };
    let mut s = frame.open(title, "epoch", "loss");
    s += &frame.polyline(epochs, loss, COLORS[0]);
    s + "</svg>\n"
}

/// Unique sorted values of a grid axis.
fn axis_values(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    u
}

/// Level sets of a regular `x,y,p_hat` grid by marching squares.
pub fn contour(columns: &[Vec<f64>], title: &str) -> std::result::Result<String, String> {
    let xs = axis_values(&columns[0]);
    let ys = axis_values(&columns[1]);
    let (nx, ny) = (xs.len(), ys.len());
    if nx < 2 || ny < 2 || nx * ny != columns[0].len() {
        return Err(format!("expected a full rectangular grid, got {nx} x {ny} axes for {} rows", columns[0].len()));
    }
    let mut z = vec![f64::NAN; nx * ny];
    for ((&x, &y), &v) in columns[0].iter().zip(&columns[1]).zip(&columns[2]) {
        let i = xs.partition_point(|&a| a < x);
        let j = ys.partition_point(|&a| a < y);
        z[j * nx + i] = v;
    }
    if z.iter().any(|v| v.is_nan()) {
        return Err("grid has missing or duplicate cells".into());
    }
    let zmax = z.iter().copied().fold(0.0, f64::max);
    let frame = Frame {
        x: (xs[0], xs[nx - 1]),
        y: (ys[0], ys[ny - 1]),
    };
    let mut s = frame.open(title, "x", "y");
    if zmax <= 0.0 {
        return Ok(s + "</svg>\n");
    }
    for (li, frac) in CONTOUR_LEVELS.iter().enumerate() {
        let level = frac * zmax;
        let mut d = String::new();
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corners = [
                    (xs[i], ys[j], z[j * nx + i]),
                    (xs[i + 1], ys[j], z[j * nx + i + 1]),
                    (xs[i + 1], ys[j + 1], z[(j + 1) * nx + i + 1]),
                    (xs[i], ys[j + 1], z[(j + 1) * nx + i]),
                ];
                let mut crossings = Vec::with_capacity(4);
                for e in 0..4 {
                    let (x0, y0, v0) = corners[e];
                    let (x1, y1, v1) = corners[(e + 1) % 4];
                    if (v0 < level) != (v1 < level) {
                        let t = (level - v0) / (v1 - v0);
                        crossings.push((x0 + t * (x1 - x0), y0 + t * (y1 - y0)));
                    }
                }
                for pair in crossings.chunks_exact(2) {
                    let _ = write!(
                        d,
                        "M{:.2},{:.2}L{:.2},{:.2}",
                        frame.px(pair[0].0),
                        frame.py(pair[0].1),
                        frame.px(pair[1].0),
                        frame.py(pair[1].1)
                    );
                }
            }
        }
        if !d.is_empty() {
            let _ = writeln!(s, r#"<path d="{d}" fill="none" stroke="{}" stroke-width="1"/>"#, COLORS[li % COLORS.len()]);
        }
    }
    Ok(s + "</svg>\n")
}

/// Reads `input`, renders `kind` and writes the SVG to `output`.
pub fn emit_plot(input: &Path, kind: PlotKind, output: &Path, truth: Option<&Density1D>) -> Result<()> {
    let columns = read_columns(input, kind.header())?;
    let title = input.file_stem().and_then(|s| s.to_str()).unwrap_or("plot");
    let svg = match kind {
        PlotKind::DensityOverlay => density_overlay(&columns, truth, title),
        PlotKind::LossCurve => loss_curve(&columns, title),
        PlotKind::Contour => contour(&columns, title).map_err(|message| CliError::Schema {
            path: input.to_path_buf(),
            message,
        })?,
    };
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(output, svg).map_err(|e| CliError::io(output, e))
}
