//! Static SVG figures.
//!
//! Output is assembled from fixed-precision numbers in a fixed element order,
//! so identical inputs always give identical bytes.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::{fit_line, ScanRow};
use crate::io::{read_distribution, read_scan, read_series, sidecar_path, FitMeta, Sidecar};
use crate::observables::{DistributionSnapshot, TimeSeries};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 52.0;

/// Heatmaps are reduced by block maxima to at most this many cells per side.
pub const MAX_HEATMAP_CELLS: usize = 128;

const PALETTE: [&str; 8] = [
    "#1b9e77", "#1f5fbf", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#a6761d", "#444444",
];

/// Viridis sampled at 0, 0.25, 0.5, 0.75, 1.
const VIRIDIS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Series,
    RescaledSeries,
    Scaling,
    Heatmap,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "series" => Ok(PlotKind::Series),
            "rescaled_series" => Ok(PlotKind::RescaledSeries),
            "scaling" => Ok(PlotKind::Scaling),
            "heatmap" => Ok(PlotKind::Heatmap),
            other => Err(Error::Config(format!(
                "unknown plot kind `{other}` (expected series, rescaled_series, scaling or heatmap)"
            ))),
        }
    }
}

/// Factor applied to `P_j` before plotting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Rescale {
    #[default]
    None,
    /// Times the node count `N`.
    N,
    /// Times `ln N`.
    LogN,
}

impl Rescale {
    pub fn factor(self, nodes: usize) -> f64 {
        match self {
            Rescale::None => 1.0,
            Rescale::N => nodes as f64,
            Rescale::LogN => (nodes as f64).ln(),
        }
    }

    fn axis_label(self) -> &'static str {
        match self {
            Rescale::None => "P_j",
            Rescale::N => "P_j × N",
            Rescale::LogN => "P_j × ln N",
        }
    }
}

impl std::str::FromStr for Rescale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Rescale::None),
            "N" => Ok(Rescale::N),
            "logN" => Ok(Rescale::LogN),
            other => Err(Error::Config(format!("unknown rescale `{other}` (expected none, N or logN)"))),
        }
    }
}

/// One labelled polyline.
#[derive(Debug, Clone, PartialEq)]
pub struct Curve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

impl Curve {
    /// `(j, P_j * factor)` for a series.
    pub fn from_series(series: &TimeSeries<f64>, rescale: Rescale) -> Result<Self> {
        if rescale != Rescale::None && series.size == 0 {
            return Err(Error::InvalidInput("rescaling needs the grid size; the series has no sidecar".into()));
        }
        let factor = rescale.factor(series.nodes());
        Ok(Curve {
            label: format!("M = {}", series.size),
            points: series.entries().map(|(j, p)| (j as f64, p * factor)).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    step: f64,
}

impl Axis {
    fn fit(lo: f64, hi: f64) -> Self {
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            let pad = if lo == 0.0 { 1.0 } else { lo.abs() * 0.1 };
            (lo - pad, hi + pad)
        };
        let raw = (hi - lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|m| m * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        Axis {
            lo: (lo / step).floor() * step,
            hi: (hi / step).ceil() * step,
            step,
        }
    }

    fn ticks(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step).round() as usize;
        (0..=n).map(|k| self.lo + k as f64 * self.step).collect()
    }

    fn label(&self, v: f64) -> String {
        let decimals = (-self.step.log10().floor()).max(0.0) as usize;
        let s = format!("{v:.decimals$}");
        if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
            s[1..].to_owned()
        } else {
            s
        }
    }
}

struct Frame {
    x: Axis,
    y: Axis,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN_LEFT + (x - self.x.lo) / (self.x.hi - self.x.lo) * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_BOTTOM - (y - self.y.lo) / (self.y.hi - self.y.lo) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)
    }

    fn draw(&self, svg: &mut String, x_label: &str, y_label: &str) {
        let (x0, x1) = (MARGIN_LEFT, WIDTH - MARGIN_RIGHT);
        let (y0, y1) = (HEIGHT - MARGIN_BOTTOM, MARGIN_TOP);
        let _ = writeln!(
            svg,
            r##"<rect class="frame" x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#000"/>"##,
            x1 - x0,
            y0 - y1
        );
        for t in self.x.ticks() {
            let x = self.px(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{x:.2}" y1="{y0:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                y0 + 5.0,
                y0 + 20.0,
                self.x.label(t)
            );
        }
        for t in self.y.ticks() {
            let y = self.py(t);
            let _ = writeln!(
                svg,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{x0:.2}" y2="{y:.2}" stroke="#000"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                x0 - 5.0,
                x0 - 8.0,
                y + 4.0,
                self.y.label(t)
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            (x0 + x1) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            escape(y_label)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn open_svg(width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"#fff\"/>\n"
    )
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

fn frame_for(xs: (f64, f64), ys: (f64, f64)) -> Frame {
    let finite = |(lo, hi): (f64, f64)| if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let (xs, ys) = (finite(xs), finite(ys));
    Frame {
        x: Axis::fit(xs.0, xs.1),
        y: Axis::fit(ys.0.min(0.0), ys.1),
    }
}

/// Multi-curve line plot.
pub fn series_svg(curves: &[Curve], x_label: &str, y_label: &str) -> String {
    let frame = frame_for(
        bounds(curves.iter().flat_map(|c| c.points.iter().map(|p| p.0))),
        bounds(curves.iter().flat_map(|c| c.points.iter().map(|p| p.1))),
    );
    let mut svg = open_svg(WIDTH, HEIGHT);
    frame.draw(&mut svg, x_label, y_label);
    for (k, curve) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut pts = String::new();
        for &(x, y) in curve.points.iter().filter(|p| p.1.is_finite()) {
            let _ = write!(pts, "{:.2},{:.2} ", frame.px(x), frame.py(y));
        }
        let _ = writeln!(
            svg,
            r#"<polyline class="curve" fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
            pts.trim_end()
        );
        let ly = MARGIN_TOP + 16.0 + 16.0 * k as f64;
        let lx = WIDTH - MARGIN_RIGHT - 110.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{ly:.2}">{}</text>"#,
            ly - 4.0,
            lx + 20.0,
            ly - 4.0,
            lx + 26.0,
            escape(&curve.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Series curves with `P_j` multiplied by the requested factor.
pub fn rescaled_series_svg(series: &[TimeSeries<f64>], rescale: Rescale) -> Result<String> {
    let curves = series
        .iter()
        .map(|s| Curve::from_series(s, rescale))
        .collect::<Result<Vec<_>>>()?;
    Ok(series_svg(&curves, "j", rescale.axis_label()))
}

/// `j1` (circles) and `j2` (squares) against `sqrt(N) = M`, with the fit of
/// `j2` as a line.
pub fn scaling_svg(rows: &[ScanRow<f64>], fit: Option<&FitMeta>) -> String {
    let first: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.peaks.first.map(|p| (r.size as f64, p.step as f64)))
        .collect();
    let second: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.peaks.second.map(|p| (r.size as f64, p.step as f64)))
        .collect();
    let all = || first.iter().chain(&second);
    let frame = frame_for(bounds(all().map(|p| p.0)), bounds(all().map(|p| p.1)));
    let mut svg = open_svg(WIDTH, HEIGHT);
    frame.draw(&mut svg, "√N", "j");

    if let Some(f) = fit {
        let (x0, x1) = (frame.x.lo, frame.x.hi);
        let _ = writeln!(
            svg,
            r##"<line class="fit" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#1f5fbf" stroke-dasharray="6 4"/>"##,
            frame.px(x0),
            frame.py(f.slope * x0 + f.intercept),
            frame.px(x1),
            frame.py(f.slope * x1 + f.intercept)
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">j2 = {:.4} √N + {:.2}, r² = {:.4}</text>"#,
            MARGIN_LEFT + 10.0,
            MARGIN_TOP + 16.0,
            f.slope,
            f.intercept,
            f.r_squared
        );
    }
    for &(x, y) in &first {
        let _ = writeln!(
            svg,
            r#"<circle class="marker j1" cx="{:.2}" cy="{:.2}" r="4" fill="{}"/>"#,
            frame.px(x),
            frame.py(y),
            PALETTE[0]
        );
    }
    for &(x, y) in &second {
        let _ = writeln!(
            svg,
            r#"<rect class="marker j2" x="{:.2}" y="{:.2}" width="8" height="8" fill="{}"/>"#,
            frame.px(x) - 4.0,
            frame.py(y) - 4.0,
            PALETTE[1]
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn viridis(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let k = (t.floor() as usize).min(VIRIDIS.len() - 2);
    let f = t - k as f64;
    let (a, b) = (VIRIDIS[k], VIRIDIS[k + 1]);
    let mix = |u: f64, v: f64| (u + (v - u) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Block maxima over `block x block` tiles; returns the reduced side length.
fn block_max(snapshot: &DistributionSnapshot<f64>, block: usize) -> (usize, Vec<f64>) {
    let m = snapshot.size;
    let side = m.div_ceil(block);
    let mut out = vec![0.0f64; side * side];
    for p in 0..m {
        for q in 0..m {
            let cell = &mut out[(p / block) * side + q / block];
            *cell = cell.max(snapshot.get(p, q));
        }
    }
    (side, out)
}

/// Side-by-side distributions on one linear color scale normalized to the
/// largest value across all panels.
pub fn heatmap_svg(snapshots: &[DistributionSnapshot<f64>]) -> Result<String> {
    let Some(first) = snapshots.first() else {
        return Err(Error::InvalidInput("heatmap needs at least one distribution".into()));
    };
    if let Some(other) = snapshots.iter().find(|s| s.size != first.size) {
        return Err(Error::SizeMismatch {
            expected: first.size,
            found: other.size,
        });
    }
    let block = first.size.div_ceil(MAX_HEATMAP_CELLS).max(1);
    let reduced: Vec<(usize, Vec<f64>)> = snapshots.iter().map(|s| block_max(s, block)).collect();
    let vmax = reduced
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0f64, f64::max);
    let scale = if vmax > 0.0 { 1.0 / vmax } else { 0.0 };

    let panel = 300.0;
    let gap = 40.0;
    let width = gap + snapshots.len() as f64 * (panel + gap) + 70.0;
    let height = panel + 80.0;
    let mut svg = open_svg(width, height);
    let _ = writeln!(
        svg,
        "<defs><linearGradient id=\"cbar\" x1=\"0\" y1=\"1\" x2=\"0\" y2=\"0\">{}</linearGradient></defs>",
        (0..VIRIDIS.len())
            .map(|k| {
                let t = k as f64 / (VIRIDIS.len() - 1) as f64;
                format!(r#"<stop offset="{t:.2}" stop-color="{}"/>"#, viridis(t))
            })
            .collect::<String>()
    );
    for (k, ((side, values), snap)) in reduced.iter().zip(snapshots).enumerate() {
        let ox = gap + k as f64 * (panel + gap);
        let oy = 40.0;
        let cell = panel / *side as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="28" text-anchor="middle">M = {}, j = {}</text>"#,
            ox + panel / 2.0,
            snap.size,
            snap.step
        );
        let _ = writeln!(svg, r#"<g class="heatmap" shape-rendering="crispEdges">"#);
        for p in 0..*side {
            for q in 0..*side {
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    ox + q as f64 * cell,
                    oy + p as f64 * cell,
                    cell + 0.01,
                    cell + 0.01,
                    viridis(values[p * side + q] * scale)
                );
            }
        }
        svg.push_str("</g>\n");
    }
    let bx = width - 60.0;
    let _ = writeln!(
        svg,
        r#"<rect class="colorbar" x="{bx:.2}" y="40" width="12" height="{panel:.2}" fill="url(#cbar)"/><text x="{:.2}" y="36" text-anchor="middle">{:.3e}</text>"#,
        bx + 6.0,
        vmax
    );
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn write_svg(svg: &str, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}

/// Reads the input files of a plot kind and writes the SVG to `path`.
///
/// Series kinds take series CSVs, `scaling` one scan CSV (fit from its
/// sidecar, else refitted), `heatmap` distribution files of one grid size.
pub fn emit_plot(kind: PlotKind, rescale: Rescale, inputs: &[PathBuf], path: impl AsRef<Path>) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("no input files given".into()));
    }
    let svg = match kind {
        PlotKind::Series | PlotKind::RescaledSeries => {
            if kind == PlotKind::RescaledSeries && rescale == Rescale::None {
                return Err(Error::Config("rescaled_series needs --rescale N or logN".into()));
            }
            let series = inputs.iter().map(read_series).collect::<Result<Vec<_>>>()?;
            rescaled_series_svg(&series, rescale)?
        }
        PlotKind::Scaling => {
            if inputs.len() != 1 {
                return Err(Error::InvalidInput("scaling plot takes exactly one scan file".into()));
            }
            let rows = read_scan(&inputs[0])?;
            let meta = sidecar_path(&inputs[0]);
            let fit = if meta.exists() {
                Sidecar::read(&meta)?.fit
            } else {
                let points: Vec<(f64, f64)> = rows
                    .iter()
                    .filter_map(|r| r.peaks.second.map(|p| (r.size as f64, p.step as f64)))
                    .collect();
                fit_line(&points)
                    .filter(|_| points.len() >= 3)
                    .map(|f| FitMeta {
                        slope: f.slope,
                        intercept: f.intercept,
                        r_squared: f.r_squared,
                    })
            };
            scaling_svg(&rows, fit.as_ref())
        }
        PlotKind::Heatmap => {
            let snaps = inputs.iter().map(read_distribution).collect::<Result<Vec<_>>>()?;
            heatmap_svg(&snaps)?
        }
    };
    write_svg(&svg, path)
}
