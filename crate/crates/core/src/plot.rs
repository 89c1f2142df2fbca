//! Static SVG charts of study results against the hit rate.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sim::{aggregate, AggRow, RunRecord};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;
const TICKS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    Scatter,
    Means,
    Histogram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotY {
    AbsErr,
    RelErr,
    Shd,
    Count,
}

impl FromStr for PlotKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "scatter" => Ok(PlotKind::Scatter),
            "means" => Ok(PlotKind::Means),
            "histogram" => Ok(PlotKind::Histogram),
            _ => Err(format!("unknown plot kind {s:?} (scatter, means, histogram)")),
        }
    }
}

impl FromStr for PlotY {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "abs_err" => Ok(PlotY::AbsErr),
            "rel_err" => Ok(PlotY::RelErr),
            "shd" => Ok(PlotY::Shd),
            "count" => Ok(PlotY::Count),
            _ => Err(format!("unknown quantity {s:?} (abs_err, rel_err, shd, count)")),
        }
    }
}

impl fmt::Display for PlotY {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlotY::AbsErr => "absolute error",
            PlotY::RelErr => "relative error",
            PlotY::Shd => "structural Hamming distance",
            PlotY::Count => "runs",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlotSpec {
    kind: PlotKind,
    y: PlotY,
}

impl PlotSpec {
    /// Histograms plot counts; the other kinds plot a per-run metric.
    pub fn new(kind: PlotKind, y: PlotY) -> Result<Self> {
        let ok = match kind {
            PlotKind::Histogram => y == PlotY::Count,
            PlotKind::Scatter | PlotKind::Means => y != PlotY::Count,
        };
        if !ok {
            return Err(Error::invalid(format!("{kind:?} plots cannot show {y}")));
        }
        Ok(Self { kind, y })
    }

    pub fn kind(&self) -> PlotKind {
        self.kind
    }

    pub fn y(&self) -> PlotY {
        self.y
    }
}

fn row_value(r: &AggRow, y: PlotY) -> f64 {
    match y {
        PlotY::AbsErr => r.mean_abs_err,
        PlotY::RelErr => r.mean_rel_err,
        PlotY::Shd => r.mean_shd,
        PlotY::Count => r.count as f64,
    }
}

/// Renders from per-run records; failed runs are left out.
pub fn plot_records(spec: PlotSpec, records: &[RunRecord]) -> Result<String> {
    match spec.kind {
        PlotKind::Scatter => {
            let points: Vec<(f64, f64)> = records
                .iter()
                .filter(|r| !r.failed)
                .filter_map(|r| {
                    let y = match spec.y {
                        PlotY::AbsErr => r.abs_err?,
                        PlotY::RelErr => r.rel_err?,
                        PlotY::Shd => r.shd? as f64,
                        PlotY::Count => unreachable!("rejected by PlotSpec::new"),
                    };
                    Some((r.hit_rate?, y))
                })
                .collect();
            render(spec, &points)
        }
        _ => {
            if records.iter().all(|r| r.failed) {
                return Err(Error::invalid("nothing to plot"));
            }
            plot_aggregate(spec, &aggregate(records)?.rows)
        }
    }
}

/// Renders per-hit-rate means or the histogram from aggregated rows.
pub fn plot_aggregate(spec: PlotSpec, rows: &[AggRow]) -> Result<String> {
    if spec.kind == PlotKind::Scatter {
        return Err(Error::invalid("scatter plots need per-run records"));
    }
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.hit_rate, row_value(r, spec.y))).collect();
    render(spec, &points)
}

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo < 1e-12 {
        let pad = if hi.abs() < 1e-12 { 1.0 } else { hi.abs() * 0.1 };
        (lo - if lo == 0.0 { 0.0 } else { pad }, hi + pad)
    } else {
        (lo, hi + (hi - lo) * 0.05)
    }
}

fn render(spec: PlotSpec, points: &[(f64, f64)]) -> Result<String> {
    if points.is_empty() {
        return Err(Error::invalid("nothing to plot"));
    }
    if points.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::invalid("cannot plot non-finite values"));
    }
    let min_x = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let max_x = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let x0 = ((min_x * 10.0).floor() / 10.0).min(max_x - 0.1).max(0.0);
    let x1 = ((max_x * 10.0).ceil() / 10.0).max(x0 + 0.1);
    let (x0, x1) = (x0 - 0.02 * (x1 - x0), x1 + 0.02 * (x1 - x0));
    let min_y = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).min(0.0);
    let max_y = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let (y0, y1) = nice_range(min_y, max_y);

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let title = match spec.kind {
        PlotKind::Scatter => format!("{} per run against hit rate", spec.y),
        PlotKind::Means => format!("mean {} per hit rate", spec.y),
        PlotKind::Histogram => "histogram of hit rates".to_string(),
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{title}</text>"#,
        WIDTH / 2.0
    );

    // Axes, ticks and grid.
    let _ = writeln!(
        s,
        r#"<path d="M{LEFT:.1},{TOP:.1}V{:.1}H{:.1}" fill="none" stroke="black"/>"#,
        TOP + ph,
        LEFT + pw
    );
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r##"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{xv:.2}</text>"##,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 19.0
        );
        let _ = writeln!(
            s,
            r##"<line x1="{:.1}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            LEFT,
            LEFT + pw,
            LEFT - 6.0,
            py + 4.0,
            tick_label(yv, y1 - y0)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">hit rate</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        spec.y
    );

    match spec.kind {
        PlotKind::Scatter => {
            for &(x, y) in points {
                let _ = writeln!(
                    s,
                    r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#1f77b4" fill-opacity="0.5"/>"##,
                    sx(x),
                    sy(y)
                );
            }
        }
        PlotKind::Means => {
            let mut pts = points.to_vec();
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let line: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                s,
                r##"<polyline points="{}" fill="none" stroke="#1f77b4"/>"##,
                line.join(" ")
            );
            for &(x, y) in &pts {
                let _ = writeln!(
                    s,
                    r##"<circle cx="{:.2}" cy="{:.2}" r="3.5" fill="#1f77b4"/>"##,
                    sx(x),
                    sy(y)
                );
            }
        }
        PlotKind::Histogram => {
            let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
            xs.sort_by(f64::total_cmp);
            let gap = xs
                .windows(2)
                .map(|w| w[1] - w[0])
                .filter(|d| *d > 1e-12)
                .fold(0.05f64, f64::min);
            let half = 0.4 * gap / (x1 - x0) * pw;
            for &(x, y) in points {
                let top = sy(y);
                let _ = writeln!(
                    s,
                    r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#1f77b4"/>"##,
                    sx(x) - half,
                    top,
                    2.0 * half,
                    sy(y0) - top
                );
            }
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn tick_label(v: f64, span: f64) -> String {
    if span >= 10.0 {
        format!("{v:.0}")
    } else if span >= 1.0 {
        format!("{v:.1}")
    } else {
        format!("{v:.3}")
    }
}
