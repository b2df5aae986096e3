//! Rank plots, quantile-ESS, local-ESS and ESS-evolution plots as
//! hand-written SVG, plus 40-column ASCII fallbacks.
//!
//! Output depends only on the inputs: no timestamps, fixed number formatting.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use crate::chain_core::{DiagnosticConfig, DrawsMatrix};
use crate::error::{DiagError, Result};
use crate::ess::{evolution_grid, EssEstimator};
use crate::scalar::Scalar;
use crate::transforms::{common_length, pool, pooled_ranks};

pub const PANEL_WIDTH: f64 = 640.0;
pub const PANEL_HEIGHT: f64 = 480.0;
pub const DEFAULT_BINS: usize = 20;
pub const DEFAULT_LOCAL_INTERVALS: usize = 20;
pub const DEFAULT_EVOLUTION_POINTS: usize = 10;
const ASCII_WIDTH: usize = 40;

const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Rank,
    QuantileEss,
    LocalEss,
    EssEvolution,
}

impl PlotKind {
    pub const ALL: [PlotKind; 4] = [
        PlotKind::Rank,
        PlotKind::QuantileEss,
        PlotKind::LocalEss,
        PlotKind::EssEvolution,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlotKind::Rank => "rank",
            PlotKind::QuantileEss => "quantile-ess",
            PlotKind::LocalEss => "local-ess",
            PlotKind::EssEvolution => "ess-evolution",
        }
    }
}

impl FromStr for PlotKind {
    type Err = DiagError;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| DiagError::InvalidArgument(format!("unknown plot kind `{s}`")))
    }
}

/// `<param>_<kind>.svg`, with characters outside `[A-Za-z0-9._-]` replaced.
pub fn file_name(param: &str, kind: PlotKind) -> String {
    let safe: String = param
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}_{}.svg", kind.as_str())
}

/// Settings shared by all plot kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotOptions {
    pub bins: usize,
    pub quantile_grid: Vec<f64>,
    pub local_intervals: usize,
    /// Prefix lengths (per chain) for the evolution plot; empty means
    /// `DEFAULT_EVOLUTION_POINTS` evenly spaced lengths.
    pub evolution_grid: Vec<usize>,
    pub ess_threshold: f64,
    pub tail_quantiles: (f64, f64),
}

impl Default for PlotOptions {
    fn default() -> Self {
        let config = DiagnosticConfig::default();
        Self {
            bins: DEFAULT_BINS,
            quantile_grid: default_quantile_grid(),
            local_intervals: DEFAULT_LOCAL_INTERVALS,
            evolution_grid: Vec::new(),
            ess_threshold: config.ess_threshold,
            tail_quantiles: config.tail_quantiles,
        }
    }
}

/// 0.01, 0.02, …, 0.99.
pub fn default_quantile_grid() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

/// Per-chain histograms of pooled ranks.
#[derive(Debug, Clone, PartialEq)]
pub struct RankPlotData {
    pub bins: usize,
    pub iterations: usize,
    /// `counts[chain][bin]`.
    pub counts: Vec<Vec<usize>>,
}

impl RankPlotData {
    /// Expected count per bin under uniform ranks, `N / bins`.
    pub fn reference(&self) -> f64 {
        self.iterations as f64 / self.bins as f64
    }

    /// Bin totals across chains.
    pub fn totals(&self) -> Vec<usize> {
        (0..self.bins)
            .map(|b| self.counts.iter().map(|c| c[b]).sum())
            .collect()
    }
}

/// Bins the pooled (average, tie-aware) ranks of each chain's draws into
/// `bins` equal-width bins over `[1, S]`.
pub fn rank_plot_data<T: Scalar, C: AsRef<[T]>>(chains: &[C], bins: usize) -> Result<RankPlotData> {
    let n = common_length(chains)?;
    if bins == 0 {
        return Err(DiagError::InvalidArgument("bins must be positive".into()));
    }
    let pooled = pool(chains);
    let s = pooled.len() as f64;
    let ranks = pooled_ranks(&pooled);
    let counts = ranks
        .chunks(n)
        .map(|chain| {
            let mut h = vec![0usize; bins];
            for r in chain {
                let b = ((r.as_f64() - 1.0) * bins as f64 / s).floor() as usize;
                h[b.min(bins - 1)] += 1;
            }
            h
        })
        .collect();
    Ok(RankPlotData {
        bins,
        iterations: n,
        counts,
    })
}

fn param_chains<'a, T: Scalar>(draws: &'a DrawsMatrix<T>, param: &str) -> Result<Vec<&'a [T]>> {
    Ok(draws.parameter(draws.require(param)?))
}

/// Numeric series behind one plot, shared by the SVG and ASCII renderers.
#[derive(Debug, Clone, PartialEq)]
struct Series {
    label: String,
    points: Vec<(f64, f64)>,
    connect: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Chart {
    title: String,
    x_label: String,
    y_label: String,
    x_range: (f64, f64),
    series: Vec<Series>,
    threshold: Option<f64>,
}

fn quantile_chart<T: Scalar>(
    draws: &DrawsMatrix<T>,
    param: &str,
    opts: &PlotOptions,
) -> Result<Chart> {
    let chains = param_chains(draws, param)?;
    let est = EssEstimator::default();
    let points = opts
        .quantile_grid
        .iter()
        .map(|&q| Ok((q, est.quantile(&chains, q)?.ess.as_f64())))
        .collect::<Result<Vec<_>>>()?;
    Ok(Chart {
        title: format!("{param}: efficiency of quantile estimates"),
        x_label: "quantile".into(),
        y_label: "ESS".into(),
        x_range: (0.0, 1.0),
        series: vec![Series {
            label: "quantile ESS".into(),
            points,
            connect: false,
        }],
        threshold: Some(opts.ess_threshold),
    })
}

fn local_chart<T: Scalar>(
    draws: &DrawsMatrix<T>,
    param: &str,
    opts: &PlotOptions,
) -> Result<Chart> {
    let chains = param_chains(draws, param)?;
    let k = opts.local_intervals;
    let local = EssEstimator::default().local(&chains, k)?;
    let points = local
        .iter()
        .enumerate()
        .map(|(i, r)| ((i as f64 + 0.5) / k as f64, r.ess.as_f64()))
        .collect();
    Ok(Chart {
        title: format!("{param}: local efficiency of small-interval probability estimates"),
        x_label: "quantile".into(),
        y_label: "ESS for small intervals".into(),
        x_range: (0.0, 1.0),
        series: vec![Series {
            label: "local ESS".into(),
            points,
            connect: false,
        }],
        threshold: Some(opts.ess_threshold),
    })
}

fn evolution_chart<T: Scalar>(
    draws: &DrawsMatrix<T>,
    param: &str,
    opts: &PlotOptions,
) -> Result<Chart> {
    let chains = param_chains(draws, param)?;
    let grid = if opts.evolution_grid.is_empty() {
        evolution_grid(draws.iterations(), DEFAULT_EVOLUTION_POINTS)
    } else {
        opts.evolution_grid.clone()
    };
    let evo = EssEstimator::default().evolution(&chains, &grid, opts.tail_quantiles)?;
    let bulk = evo
        .iter()
        .map(|p| (p.draws as f64, p.bulk.as_f64()))
        .collect();
    let tail = evo
        .iter()
        .map(|p| (p.draws as f64, p.tail.as_f64()))
        .collect();
    let x_max = evo.last().map_or(1.0, |p| p.draws as f64);
    Ok(Chart {
        title: format!("{param}: change of ESS with total draws"),
        x_label: "total number of draws".into(),
        y_label: "ESS".into(),
        x_range: (0.0, x_max),
        series: vec![
            Series {
                label: "bulk".into(),
                points: bulk,
                connect: true,
            },
            Series {
                label: "tail".into(),
                points: tail,
                connect: true,
            },
        ],
        threshold: Some(opts.ess_threshold),
    })
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn svg_open(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{width:.0}" height="{height:.0}" fill="white"/>"#
    );
}

/// Nice upper limit for an axis starting at zero.
fn nice_max(v: f64) -> f64 {
    if !(v > 0.0) || !v.is_finite() {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for step in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if step * mag >= v {
            return step * mag;
        }
    }
    10.0 * mag
}

fn fmt_tick(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Plot area inside one 640×480 panel at offset `(ox, oy)`.
struct Frame {
    ox: f64,
    oy: f64,
    x: (f64, f64),
    y_max: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let w = PANEL_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
        self.ox + MARGIN_LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * w
    }

    fn py(&self, y: f64) -> f64 {
        let h = PANEL_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
        self.oy + PANEL_HEIGHT - MARGIN_BOTTOM - y / self.y_max * h
    }

    fn axes(&self, out: &mut String, title: &str, x_label: &str, y_label: &str) {
        let (l, r) = (self.px(self.x.0), self.px(self.x.1));
        let (b, t) = (self.py(0.0), self.py(self.y_max));
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"##,
            self.ox + PANEL_WIDTH / 2.0,
            self.oy + 24.0,
            escape(title)
        );
        let _ = writeln!(
            out,
            r##"<path d="M{l:.2},{t:.2} L{l:.2},{b:.2} L{r:.2},{b:.2}" fill="none" stroke="#000"/>"##
        );
        for i in 0..=4 {
            let v = self.y_max * i as f64 / 4.0;
            let y = self.py(v);
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{l:.2}" y2="{y:.2}" stroke="#000"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                l - 4.0,
                l - 6.0,
                y + 4.0,
                fmt_tick(v)
            );
            let xv = self.x.0 + (self.x.1 - self.x.0) * i as f64 / 4.0;
            let x = self.px(xv);
            let _ = writeln!(
                out,
                r##"<line x1="{x:.2}" y1="{b:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                b + 4.0,
                b + 18.0,
                fmt_tick(xv)
            );
        }
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
            (l + r) / 2.0,
            b + 38.0,
            escape(x_label)
        );
        let cy = (t + b) / 2.0;
        let cx = self.ox + 16.0;
        let _ = writeln!(
            out,
            r##"<text x="{cx:.2}" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 {cx:.2} {cy:.2})">{}</text>"##,
            escape(y_label)
        );
    }

    fn hline(&self, out: &mut String, y: f64, dashed: bool, label: Option<&str>) {
        let dash = if dashed {
            r#" stroke-dasharray="6,4""#
        } else {
            ""
        };
        let (l, r, py) = (self.px(self.x.0), self.px(self.x.1), self.py(y));
        let _ = writeln!(
            out,
            r##"<line x1="{l:.2}" y1="{py:.2}" x2="{r:.2}" y2="{py:.2}" stroke="#555"{dash}/>"##
        );
        if let Some(label) = label {
            let _ = writeln!(
                out,
                r##"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="#555">{}</text>"##,
                r - 2.0,
                py - 4.0,
                escape(label)
            );
        }
    }
}

fn chart_svg(chart: &Chart) -> String {
    let mut out = String::new();
    svg_open(&mut out, PANEL_WIDTH, PANEL_HEIGHT);
    let finite_max = chart
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let frame = Frame {
        ox: 0.0,
        oy: 0.0,
        x: chart.x_range,
        y_max: nice_max(finite_max.max(chart.threshold.unwrap_or(0.0)) * 1.05),
    };
    frame.axes(&mut out, &chart.title, &chart.x_label, &chart.y_label);
    if let Some(t) = chart.threshold {
        frame.hline(&mut out, t, true, Some(&format!("ESS = {}", fmt_tick(t))));
    }
    for (i, s) in chart.series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = s
            .points
            .iter()
            .filter(|p| p.1.is_finite())
            .map(|&(x, y)| (frame.px(x), frame.py(y)))
            .collect();
        if s.connect && pts.len() > 1 {
            let d: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                d.join(" ")
            );
        }
        for (x, y) in &pts {
            let _ = writeln!(
                out,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="{color}"/>"#
            );
        }
        if chart.series.len() > 1 {
            let ly = MARGIN_TOP + 14.0 + 16.0 * i as f64;
            let lx = MARGIN_LEFT + 12.0;
            let _ = writeln!(
                out,
                r#"<circle cx="{lx:.2}" cy="{:.2}" r="4" fill="{color}"/><text x="{:.2}" y="{ly:.2}">{}</text>"#,
                ly - 4.0,
                lx + 8.0,
                escape(&s.label)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Rank-histogram small multiples, one 640×480 panel per chain.
pub fn rank_plot<T: Scalar>(draws: &DrawsMatrix<T>, param: &str, bins: usize) -> Result<String> {
    let data = rank_plot_data(&param_chains(draws, param)?, bins)?;
    Ok(rank_svg(param, &data))
}

fn rank_svg(param: &str, data: &RankPlotData) -> String {
    let m = data.counts.len();
    let cols = (m as f64).sqrt().ceil() as usize;
    let rows = m.div_ceil(cols);
    let mut out = String::new();
    svg_open(
        &mut out,
        PANEL_WIDTH * cols as f64,
        PANEL_HEIGHT * rows as f64,
    );
    let top = data.counts.iter().flatten().copied().max().unwrap_or(0) as f64;
    let y_max = nice_max(top.max(data.reference()) * 1.05);
    let s = (data.iterations * m) as f64;
    for (c, counts) in data.counts.iter().enumerate() {
        let frame = Frame {
            ox: PANEL_WIDTH * (c % cols) as f64,
            oy: PANEL_HEIGHT * (c / cols) as f64,
            x: (0.0, s),
            y_max,
        };
        frame.axes(
            &mut out,
            &format!("{param}: chain {}", c + 1),
            "rank",
            "count",
        );
        let color = PALETTE[c % PALETTE.len()];
        let width = s / data.bins as f64;
        for (b, &count) in counts.iter().enumerate() {
            let x0 = frame.px(b as f64 * width);
            let x1 = frame.px((b + 1) as f64 * width);
            let y = frame.py(count as f64);
            let _ = writeln!(
                out,
                r##"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.7" stroke="#fff"/>"##,
                x1 - x0,
                frame.py(0.0) - y
            );
        }
        frame.hline(&mut out, data.reference(), true, None);
    }
    out.push_str("</svg>\n");
    out
}

pub fn quantile_ess_plot<T: Scalar>(
    draws: &DrawsMatrix<T>,
    param: &str,
    quantile_grid: &[f64],
) -> Result<String> {
    let opts = PlotOptions {
        quantile_grid: quantile_grid.to_vec(),
        ..Default::default()
    };
    Ok(chart_svg(&quantile_chart(draws, param, &opts)?))
}

pub fn local_ess_plot<T: Scalar>(draws: &DrawsMatrix<T>, param: &str, k: usize) -> Result<String> {
    let opts = PlotOptions {
        local_intervals: k,
        ..Default::default()
    };
    Ok(chart_svg(&local_chart(draws, param, &opts)?))
}

/// `grid` holds prefix lengths per chain.
pub fn ess_evolution_plot<T: Scalar>(
    draws: &DrawsMatrix<T>,
    param: &str,
    grid: &[usize],
) -> Result<String> {
    let opts = PlotOptions {
        evolution_grid: grid.to_vec(),
        ..Default::default()
    };
    Ok(chart_svg(&evolution_chart(draws, param, &opts)?))
}

pub fn render_svg<T: Scalar>(
    draws: &DrawsMatrix<T>,
    param: &str,
    kind: PlotKind,
    opts: &PlotOptions,
) -> Result<String> {
    match kind {
        PlotKind::Rank => rank_plot(draws, param, opts.bins),
        PlotKind::QuantileEss => Ok(chart_svg(&quantile_chart(draws, param, opts)?)),
        PlotKind::LocalEss => Ok(chart_svg(&local_chart(draws, param, opts)?)),
        PlotKind::EssEvolution => Ok(chart_svg(&evolution_chart(draws, param, opts)?)),
    }
}

/// Renders `kind` for every parameter in parallel; returns `(file name, SVG)`
/// in parameter order.
pub fn render_all<T: Scalar>(
    draws: &DrawsMatrix<T>,
    kind: PlotKind,
    opts: &PlotOptions,
) -> Result<Vec<(String, String)>> {
    draws
        .names()
        .par_iter()
        .map(|name| Ok((file_name(name, kind), render_svg(draws, name, kind, opts)?)))
        .collect()
}

fn bar(value: f64, max: f64) -> String {
    if !value.is_finite() || !(max > 0.0) {
        return String::new();
    }
    let len = ((value / max) * ASCII_WIDTH as f64).round() as usize;
    "#".repeat(len.min(ASCII_WIDTH))
}

fn ascii_rows(out: &mut String, rows: &[(String, f64)], max: f64, reference: Option<f64>) {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let ref_col = reference
        .filter(|r| r.is_finite() && max > 0.0)
        .map(|r| (((r / max) * ASCII_WIDTH as f64).round() as usize).min(ASCII_WIDTH));
    for (label, v) in rows {
        let mut b: Vec<char> = format!("{:<w$}", bar(*v, max), w = ASCII_WIDTH)
            .chars()
            .collect();
        if let Some(c) = ref_col {
            if c < ASCII_WIDTH && b[c] == ' ' {
                b[c] = '|';
            }
        }
        let b: String = b.into_iter().collect();
        let val = if v.is_finite() {
            fmt_tick(v.round())
        } else {
            "NA".into()
        };
        let _ = writeln!(out, "{label:>width$} {b} {val}");
    }
}

/// Terminal rendering: one 40-column bar per bin / grid point, `|` marks
/// the reference (rank plots) or threshold (ESS plots).
pub fn render_ascii<T: Scalar>(
    draws: &DrawsMatrix<T>,
    param: &str,
    kind: PlotKind,
    opts: &PlotOptions,
) -> Result<String> {
    let mut out = String::new();
    if kind == PlotKind::Rank {
        let data = rank_plot_data(&param_chains(draws, param)?, opts.bins)?;
        let max = data.counts.iter().flatten().copied().max().unwrap_or(0) as f64;
        let max = max.max(data.reference());
        for (c, counts) in data.counts.iter().enumerate() {
            let _ = writeln!(out, "{param}: chain {} rank histogram", c + 1);
            let rows: Vec<(String, f64)> = counts
                .iter()
                .enumerate()
                .map(|(b, &n)| (format!("bin {:>2}", b + 1), n as f64))
                .collect();
            ascii_rows(&mut out, &rows, max, Some(data.reference()));
        }
        return Ok(out);
    }
    let chart = match kind {
        PlotKind::QuantileEss => quantile_chart(draws, param, opts)?,
        PlotKind::LocalEss => local_chart(draws, param, opts)?,
        _ => evolution_chart(draws, param, opts)?,
    };
    let max = chart
        .series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.1))
        .filter(|v| v.is_finite())
        .fold(chart.threshold.unwrap_or(0.0), f64::max);
    let _ = writeln!(out, "{}", chart.title);
    for s in &chart.series {
        if chart.series.len() > 1 {
            let _ = writeln!(out, "{}:", s.label);
        }
        let rows: Vec<(String, f64)> = s.points.iter().map(|&(x, y)| (fmt_tick(x), y)).collect();
        ascii_rows(&mut out, &rows, max, chart.threshold);
    }
    Ok(out)
}
