//! Static SVG charts: ensemble-mean lines over a 5th–95th percentile band,
//! laid out as a grid of panels.
//!
//! Output is a pure function of the input; coordinates are printed with a
//! fixed number of decimals so equal results give equal bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::engine::{EnsembleResult, SeriesStats};
use crate::model::{Quadrant, Scenario, SensitivityFactor};

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("nothing to chart: the ensemble has no completed paths")]
    Empty,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub mean: Vec<f64>,
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

impl Series {
    pub fn from_stats(name: impl Into<String>, color: &'static str, stats: &SeriesStats) -> Self {
        Self {
            name: name.into(),
            color,
            mean: stats.mean.clone(),
            band: Some((stats.p05.clone(), stats.p95.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub title: String,
    pub columns: usize,
    pub panels: Vec<Panel>,
}

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 280.0;
const MARGIN_L: f64 = 58.0;
const MARGIN_R: f64 = 14.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 40.0;
const TITLE_H: f64 = 34.0;
const LEGEND_H: f64 = 26.0;

pub fn scenario_color(s: Scenario) -> &'static str {
    match s {
        Scenario::Baseline => "#1f77b4",
        Scenario::Positive => "#2ca02c",
        Scenario::Negative => "#d62728",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Rounds a span to a "nice" tick step (1, 2 or 5 times a power of ten).
fn nice_step(span: f64, ticks: f64) -> f64 {
    let raw = span / ticks;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let k = if r <= 1.0 {
        1.0
    } else if r <= 2.0 {
        2.0
    } else if r <= 5.0 {
        5.0
    } else {
        10.0
    };
    k * mag
}

fn y_range(panel: &Panel) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in &panel.series {
        let band = s.band.iter().flat_map(|(a, b)| a.iter().chain(b.iter()));
        for &v in s.mean.iter().chain(band) {
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        let pad = hi.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn render_panel(out: &mut String, panel: &Panel, ox: f64, oy: f64) {
    let pw = PANEL_W - MARGIN_L - MARGIN_R;
    let ph = PANEL_H - MARGIN_T - MARGIN_B;
    let x0 = ox + MARGIN_L;
    let y0 = oy + MARGIN_T;
    let n = panel.series.iter().map(|s| s.mean.len()).max().unwrap_or(0);
    let x_max = (n.max(2) - 1) as f64;
    let (lo, hi) = y_range(panel);
    let sx = |t: usize| x0 + pw * t as f64 / x_max;
    let sy = |v: f64| {
        let v = if v.is_nan() { lo } else { v.clamp(lo, hi) };
        y0 + ph * (1.0 - (v - lo) / (hi - lo))
    };

    let _ = writeln!(out, "<g class=\"panel\">");
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"13\" text-anchor=\"middle\">{}</text>",
        x0 + pw / 2.0,
        oy + 18.0,
        escape(&panel.title)
    );
    let _ = writeln!(
        out,
        "<rect x=\"{x0:.2}\" y=\"{y0:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\" fill=\"none\" stroke=\"#444\" stroke-width=\"0.8\"/>"
    );

    let step = nice_step(hi - lo, 5.0);
    let mut v = (lo / step).ceil() * step;
    while v <= hi + 1e-12 {
        let y = sy(v);
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"#ddd\" stroke-width=\"0.5\"/>",
            x0,
            x0 + pw
        );
        let label = if v.abs() < step * 1e-6 { 0.0 } else { v };
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            x0 - 4.0,
            y + 3.5,
            format_tick(label, step)
        );
        v += step;
    }
    let xstep = nice_step(x_max, 5.0).max(1.0);
    let mut t = 0.0;
    while t <= x_max + 1e-9 {
        let x = sx(t as usize);
        let _ = writeln!(
            out,
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"middle\">{}</text>",
            y0 + ph + 14.0,
            t as usize
        );
        t += xstep;
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">step</text>",
        x0 + pw / 2.0,
        y0 + ph + 30.0
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 {:.2} {:.2})\">{}</text>",
        ox + 14.0,
        y0 + ph / 2.0,
        ox + 14.0,
        y0 + ph / 2.0,
        escape(&panel.y_label)
    );

    for s in &panel.series {
        if let Some((p05, p95)) = &s.band {
            let mut pts = String::new();
            for (t, v) in p95.iter().enumerate() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(t), sy(*v));
            }
            for (t, v) in p05.iter().enumerate().rev() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(t), sy(*v));
            }
            let _ = writeln!(
                out,
                "<polygon class=\"band\" points=\"{}\" fill=\"{}\" fill-opacity=\"0.18\" stroke=\"none\"/>",
                pts.trim_end(),
                s.color
            );
        }
    }
    for s in &panel.series {
        let mut pts = String::new();
        for (t, v) in s.mean.iter().enumerate() {
            let _ = write!(pts, "{:.2},{:.2} ", sx(t), sy(*v));
        }
        let _ = writeln!(
            out,
            "<polyline class=\"mean\" data-series=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.3\"/>",
            escape(&s.name),
            pts.trim_end(),
            s.color
        );
    }
    let _ = writeln!(out, "</g>");
}

fn format_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 {
        0
    } else {
        (-step.log10().floor()) as usize
    };
    format!("{v:.decimals$}")
}

/// Renders a figure as an SVG 1.1 document.
pub fn render(fig: &Figure) -> String {
    let cols = fig.columns.max(1);
    let rows = fig.panels.len().div_ceil(cols).max(1);
    let width = PANEL_W * cols as f64;
    let height = TITLE_H + LEGEND_H + PANEL_H * rows as f64;
    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"Helvetica, Arial, sans-serif\">"
    );
    let _ = writeln!(out, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"22\" font-size=\"16\" text-anchor=\"middle\">{}</text>",
        width / 2.0,
        escape(&fig.title)
    );

    // Legend from the first panel's series.
    if let Some(p) = fig.panels.first() {
        let mut x = 20.0;
        let y = TITLE_H + 12.0;
        for s in &p.series {
            let _ = writeln!(
                out,
                "<line x1=\"{x:.2}\" y1=\"{y:.2}\" x2=\"{:.2}\" y2=\"{y:.2}\" stroke=\"{}\" stroke-width=\"2\"/>",
                x + 18.0,
                s.color
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"11\">{}</text>",
                x + 22.0,
                y + 4.0,
                escape(&s.name)
            );
            x += 30.0 + 7.0 * s.name.len() as f64;
        }
    }

    for (i, panel) in fig.panels.iter().enumerate() {
        let ox = PANEL_W * (i % cols) as f64;
        let oy = TITLE_H + LEGEND_H + PANEL_H * (i / cols) as f64;
        render_panel(&mut out, panel, ox, oy);
    }
    out.push_str("</svg>\n");
    out
}

fn write_figure(fig: &Figure, path: &Path) -> std::io::Result<PathBuf> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, render(fig))?;
    Ok(path.to_path_buf())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Demand,
    Price,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Demand => "demand",
            Metric::Price => "price",
        }
    }

    fn y_label(&self) -> &'static str {
        match self {
            Metric::Demand => "user demand (USD)",
            Metric::Price => "price (USD)",
        }
    }

    fn stats<'a>(&self, r: &'a EnsembleResult) -> &'a SeriesStats {
        match self {
            Metric::Demand => &r.aggregates.demand,
            Metric::Price => &r.aggregates.price,
        }
    }
}

fn scenario_panel(title: String, metric: Metric, runs: &[(Scenario, &EnsembleResult)]) -> Panel {
    Panel {
        title,
        y_label: metric.y_label().to_string(),
        series: runs
            .iter()
            .map(|(s, r)| Series::from_stats(s.name(), scenario_color(*s), metric.stats(r)))
            .collect(),
    }
}

fn ensure_nonempty<'a>(mut runs: impl Iterator<Item = &'a EnsembleResult>) -> Result<(), ChartError> {
    if runs.any(|r| r.is_empty()) {
        Err(ChartError::Empty)
    } else {
        Ok(())
    }
}

/// `demand.svg` and `price.svg` for one design, one series per scenario.
pub fn render_scenarios(
    quadrant: Quadrant,
    runs: &[(Scenario, &EnsembleResult)],
    dir: &Path,
) -> Result<Vec<PathBuf>, ChartError> {
    if runs.is_empty() {
        return Err(ChartError::Empty);
    }
    ensure_nonempty(runs.iter().map(|(_, r)| *r))?;
    let mut files = Vec::new();
    for metric in [Metric::Demand, Metric::Price] {
        let fig = Figure {
            title: format!("{} {}", quadrant.label(), metric.name()),
            columns: 1,
            panels: vec![scenario_panel(quadrant.label().to_string(), metric, runs)],
        };
        files.push(write_figure(&fig, &dir.join(format!("{}.svg", metric.name())))?);
    }
    Ok(files)
}

/// The four designs side by side, one figure per metric.
pub fn render_grid(
    grid: &[(Quadrant, Vec<(Scenario, &EnsembleResult)>)],
    dir: &Path,
) -> Result<Vec<PathBuf>, ChartError> {
    if grid.is_empty() || grid.iter().any(|(_, r)| r.is_empty()) {
        return Err(ChartError::Empty);
    }
    ensure_nonempty(grid.iter().flat_map(|(_, r)| r.iter().map(|(_, e)| *e)))?;
    let mut files = Vec::new();
    for metric in [Metric::Demand, Metric::Price] {
        let fig = Figure {
            title: format!("Stablecoin {} by design", metric.name()),
            columns: 2,
            panels: grid
                .iter()
                .map(|(q, runs)| scenario_panel(q.label().to_string(), metric, runs))
                .collect(),
        };
        files.push(write_figure(&fig, &dir.join(format!("{}.svg", metric.name())))?);
    }
    Ok(files)
}

/// One panel per multiplier, one figure per metric.
pub fn render_sweep(
    quadrant: Quadrant,
    factor: SensitivityFactor,
    sweep: &[(f64, Vec<(Scenario, &EnsembleResult)>)],
    dir: &Path,
) -> Result<Vec<PathBuf>, ChartError> {
    if sweep.is_empty() || sweep.iter().any(|(_, r)| r.is_empty()) {
        return Err(ChartError::Empty);
    }
    ensure_nonempty(sweep.iter().flat_map(|(_, r)| r.iter().map(|(_, e)| *e)))?;
    let mut files = Vec::new();
    for metric in [Metric::Demand, Metric::Price] {
        let fig = Figure {
            title: format!(
                "{} {}: {} sensitivity",
                quadrant.label(),
                metric.name(),
                factor.name()
            ),
            columns: 3,
            panels: sweep
                .iter()
                .map(|(m, runs)| scenario_panel(format!("multiplier {m}"), metric, runs))
                .collect(),
        };
        files.push(write_figure(
            &fig,
            &dir.join(format!("sweep-{}-{}.svg", factor.name(), metric.name())),
        )?);
    }
    Ok(files)
}
