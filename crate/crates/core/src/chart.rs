//! SVG charts for aggregated weather data.
//!
//! Output is byte-for-byte deterministic: fixed 900x450 canvas, fixed
//! font stack, every coordinate printed with two decimals, nothing derived
//! from the clock or the artifact id.

use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::analytics::{AggregatedSeries, AnalyticsError, PeriodRange, TimeStep};
use crate::artifacts::{ArtifactStore, StoreError};
use crate::calendar::MonthDay;
use crate::epw::{Field, WeatherSeries};

pub const WIDTH: f64 = 900.0;
pub const HEIGHT: f64 = 450.0;
const MARGIN_LEFT: f64 = 72.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 44.0;
const MARGIN_BOTTOM: f64 = 64.0;
const Y_TICKS: usize = 10;
const MAX_X_LABELS: usize = 12;
const FONT: &str = "DejaVu Sans, Arial, sans-serif";

#[derive(Debug, Error)]
pub enum ChartError {
    #[error("cannot chart an empty series")]
    EmptySeries,
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    StoreWriteFailed(#[from] StoreError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChartArtifact {
    pub artifact_id: String,
    pub media_type: &'static str,
    pub path: std::path::PathBuf,
    pub title: String,
    pub point_count: usize,
}

/// "Nice" number close to `x`: 1, 2, 5 or 10 times a power of ten.
fn nice_number(x: f64, round: bool) -> f64 {
    let exp = x.log10().floor();
    let frac = x / 10f64.powf(exp);
    let nice = if round {
        match frac {
            f if f < 1.5 => 1.0,
            f if f < 3.0 => 2.0,
            f if f < 7.0 => 5.0,
            _ => 10.0,
        }
    } else {
        match frac {
            f if f <= 1.0 => 1.0,
            f if f <= 2.0 => 2.0,
            f if f <= 5.0 => 5.0,
            _ => 10.0,
        }
    };
    nice * 10f64.powf(exp)
}

/// Axis bounds and tick spacing covering `[lo, hi]` with about ten ticks.
pub(crate) fn nice_axis(lo: f64, hi: f64) -> (f64, f64, f64) {
    let (lo, hi) = if hi - lo < 1e-9 { (lo - 1.0, hi + 1.0) } else { (lo, hi) };
    let range = nice_number(hi - lo, false);
    let step = nice_number(range / (Y_TICKS - 1) as f64, true);
    ((lo / step).floor() * step, (hi / step).ceil() * step, step)
}

fn tick_decimals(step: f64) -> usize {
    (-step.log10().floor()).max(0.0) as usize
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    y_lo: f64,
    y_hi: f64,
}

impl Frame {
    fn plot_w() -> f64 {
        WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    }

    fn plot_h() -> f64 {
        HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    }

    fn y(&self, v: f64) -> f64 {
        MARGIN_TOP + Self::plot_h() * (self.y_hi - v) / (self.y_hi - self.y_lo)
    }
}

fn open_svg(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="{FONT}">"#
    );
    let _ = writeln!(out, r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="26" font-size="17" text-anchor="middle" fill="#222222">{}</text>"##,
        WIDTH / 2.0,
        escape(title)
    );
}

fn field_axis_label(field: Field, units: &str) -> String {
    if units.is_empty() {
        field.name().to_string()
    } else {
        format!("{} ({units})", field.name())
    }
}

/// Builds the line chart SVG without storing it.
pub fn line_chart_svg(agg: &AggregatedSeries, title: &str) -> Result<String, ChartError> {
    if agg.points.is_empty() {
        return Err(ChartError::EmptySeries);
    }
    let band = agg.step != TimeStep::Hourly;
    let (lo, hi) = agg
        .points
        .iter()
        .filter_map(|p| p.stats)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            if band {
                (lo.min(s.min), hi.max(s.max))
            } else {
                (lo.min(s.mean), hi.max(s.mean))
            }
        });
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let (y_lo, y_hi, step) = nice_axis(lo, hi);
    let frame = Frame { y_lo, y_hi };
    let n = agg.points.len();
    let slot = Frame::plot_w() / n as f64;
    let x = |i: usize| MARGIN_LEFT + slot * (i as f64 + 0.5);

    let mut out = String::with_capacity(8192 + n * 64);
    open_svg(&mut out, title);

    // grid and y ticks
    let decimals = tick_decimals(step);
    let ticks = ((y_hi - y_lo) / step).round() as usize;
    out.push_str("<g class=\"y-axis\" font-size=\"11\" fill=\"#444444\">\n");
    for t in 0..=ticks {
        let v = y_lo + step * t as f64;
        let y = frame.y(v);
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN_LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e3e3e3"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.decimals$}</text>"##,
            WIDTH - MARGIN_RIGHT,
            MARGIN_LEFT - 6.0,
            y + 4.0,
        );
    }
    out.push_str("</g>\n");
    let _ = writeln!(
        out,
        r##"<text x="18" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 18 {:.2})" fill="#222222">{}</text>"##,
        MARGIN_TOP + Frame::plot_h() / 2.0,
        MARGIN_TOP + Frame::plot_h() / 2.0,
        escape(&field_axis_label(agg.field, agg.units))
    );

    // x labels
    let every = n.div_ceil(MAX_X_LABELS).max(1);
    out.push_str("<g class=\"x-axis\" font-size=\"11\" fill=\"#444444\" text-anchor=\"middle\">\n");
    for (i, p) in agg.points.iter().enumerate().filter(|(i, _)| i % every == 0) {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            x(i),
            HEIGHT - MARGIN_BOTTOM + 18.0,
            escape(&p.label)
        );
    }
    out.push_str("</g>\n");
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle" fill="#222222">{} ({})</text>"##,
        MARGIN_LEFT + Frame::plot_w() / 2.0,
        HEIGHT - 18.0,
        match agg.step {
            TimeStep::Hourly => "hour",
            TimeStep::Daily => "day",
            TimeStep::Monthly => "month",
        },
        escape(&agg.period.to_string())
    );
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN_LEFT:.2}" y="{MARGIN_TOP:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#888888"/>"##,
        Frame::plot_w(),
        Frame::plot_h()
    );

    // contiguous runs of buckets with data; missing buckets break the line
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for (i, p) in agg.points.iter().enumerate() {
        match (p.stats.is_some(), runs.last_mut()) {
            (true, Some(run)) if run.last() == Some(&(i.wrapping_sub(1))) => run.push(i),
            (true, _) => runs.push(vec![i]),
            (false, _) => {}
        }
    }
    if band {
        for run in &runs {
            let mut pts: Vec<String> = run
                .iter()
                .map(|&i| format!("{:.2},{:.2}", x(i), frame.y(agg.points[i].stats.unwrap().max)))
                .collect();
            pts.extend(
                run.iter()
                    .rev()
                    .map(|&i| format!("{:.2},{:.2}", x(i), frame.y(agg.points[i].stats.unwrap().min))),
            );
            let _ = writeln!(
                out,
                r##"<polygon class="band" points="{}" fill="#f4a261" fill-opacity="0.25" stroke="none"/>"##,
                pts.join(" ")
            );
        }
    }
    for run in &runs {
        let pts: Vec<String> = run
            .iter()
            .map(|&i| format!("{:.2},{:.2}", x(i), frame.y(agg.points[i].stats.unwrap().mean)))
            .collect();
        let _ = writeln!(
            out,
            r##"<polyline class="mean" points="{}" fill="none" stroke="#d1495b" stroke-width="2"/>"##,
            pts.join(" ")
        );
    }
    for (i, p) in agg.points.iter().enumerate() {
        if let Some(s) = p.stats {
            let _ = writeln!(
                out,
                r##"<circle class="point" cx="{:.2}" cy="{:.2}" r="2.5" fill="#d1495b"/>"##,
                x(i),
                frame.y(s.mean)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Draws the mean of each bucket as a line (with a min/max band for daily
/// and monthly steps) and stores the SVG.
pub fn render_line(agg: &AggregatedSeries, title: &str, store: &ArtifactStore) -> Result<ChartArtifact, ChartError> {
    let svg = line_chart_svg(agg, title)?;
    let stored = store.put(svg.as_bytes(), "svg")?;
    Ok(ChartArtifact {
        artifact_id: stored.artifact_id,
        media_type: stored.media_type,
        path: stored.path,
        title: title.to_string(),
        point_count: agg.points.len(),
    })
}

const PALETTE: [(f64, f64, f64); 5] = [
    (49.0, 54.0, 149.0),
    (116.0, 173.0, 209.0),
    (255.0, 255.0, 191.0),
    (244.0, 109.0, 67.0),
    (165.0, 0.0, 38.0),
];
const MISSING_FILL: &str = "#bdbdbd";

fn color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0) * (PALETTE.len() - 1) as f64;
    let i = (t.floor() as usize).min(PALETTE.len() - 2);
    let f = t - i as f64;
    let (a, b) = (PALETTE[i], PALETTE[i + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

/// Hour-of-day by day grid for one field. Returns the SVG and the number of cells.
pub fn heatmap_svg(series: &WeatherSeries, field: &str, period: PeriodRange, title: &str) -> Result<(String, usize), ChartError> {
    let field = Field::from_name(field).map_err(AnalyticsError::from)?;
    // (date, per-hour sum and count)
    let mut days: Vec<(MonthDay, [(f64, u32); 24])> = Vec::new();
    for r in period.select(series) {
        let date = r.timestamp.date();
        if days.last().map(|(d, _)| *d) != Some(date) {
            days.push((date, [(0.0, 0); 24]));
        }
        if let (Some(v), Some((_, hours))) = (r.get(field), days.last_mut()) {
            let cell = &mut hours[usize::from(r.timestamp.hour)];
            cell.0 += v;
            cell.1 += 1;
        }
    }
    if days.is_empty() {
        return Err(AnalyticsError::EmptyPeriod.into());
    }
    let cells: Vec<Vec<Option<f64>>> = days
        .iter()
        .map(|(_, hours)| hours.iter().map(|&(s, c)| (c > 0).then(|| s / f64::from(c))).collect())
        .collect();
    let (lo, hi) = cells
        .iter()
        .flatten()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));

    let legend_w = 56.0;
    let plot_w = Frame::plot_w() - legend_w;
    let plot_h = Frame::plot_h();
    let cw = plot_w / days.len() as f64;
    let ch = plot_h / 24.0;

    let mut out = String::with_capacity(days.len() * 24 * 96 + 4096);
    open_svg(&mut out, title);
    out.push_str("<g class=\"grid\" shape-rendering=\"crispEdges\">\n");
    for (col, hours) in cells.iter().enumerate() {
        for (hour, v) in hours.iter().enumerate() {
            let fill = match v {
                Some(v) if hi > lo => color((v - lo) / (hi - lo)),
                Some(_) => color(0.5),
                None => MISSING_FILL.to_string(),
            };
            let class = if v.is_some() { "cell" } else { "cell missing" };
            let _ = writeln!(
                out,
                r#"<rect class="{class}" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                MARGIN_LEFT + cw * col as f64,
                MARGIN_TOP + ch * hour as f64,
                cw,
                ch
            );
        }
    }
    out.push_str("</g>\n");

    out.push_str("<g class=\"y-axis\" font-size=\"11\" fill=\"#444444\" text-anchor=\"end\">\n");
    for hour in (0..24).step_by(3) {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{hour:02}:00</text>"#,
            MARGIN_LEFT - 6.0,
            MARGIN_TOP + ch * (hour as f64 + 0.5) + 4.0
        );
    }
    out.push_str("</g>\n");
    let every = days.len().div_ceil(MAX_X_LABELS).max(1);
    out.push_str("<g class=\"x-axis\" font-size=\"11\" fill=\"#444444\" text-anchor=\"middle\">\n");
    for (col, (date, _)) in days.iter().enumerate().filter(|(i, _)| i % every == 0) {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{date}</text>"#,
            MARGIN_LEFT + cw * (col as f64 + 0.5),
            HEIGHT - MARGIN_BOTTOM + 18.0
        );
    }
    out.push_str("</g>\n");
    let _ = writeln!(
        out,
        r##"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle" fill="#222222">{}</text>"##,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 18.0,
        escape(&field_axis_label(field, field.units()))
    );

    // colour legend
    let lx = WIDTH - MARGIN_RIGHT - legend_w + 16.0;
    for k in 0..10 {
        let t = 1.0 - k as f64 / 9.0;
        let _ = writeln!(
            out,
            r#"<rect class="legend" x="{lx:.2}" y="{:.2}" width="14" height="{:.2}" fill="{}"/>"#,
            MARGIN_TOP + plot_h * k as f64 / 10.0,
            plot_h / 10.0,
            color(t)
        );
    }
    if lo.is_finite() {
        let _ = writeln!(
            out,
            r##"<text x="{:.2}" y="{:.2}" font-size="10" fill="#444444">{hi:.1}</text><text x="{:.2}" y="{:.2}" font-size="10" fill="#444444">{lo:.1}</text>"##,
            lx,
            MARGIN_TOP - 4.0,
            lx,
            MARGIN_TOP + plot_h + 12.0
        );
    }
    out.push_str("</svg>\n");
    Ok((out, days.len() * 24))
}

/// Renders and stores a heatmap; `point_count` is the number of grid cells.
pub fn render_heatmap(
    series: &WeatherSeries,
    field: &str,
    period: PeriodRange,
    title: &str,
    store: &ArtifactStore,
) -> Result<ChartArtifact, ChartError> {
    let (svg, cells) = heatmap_svg(series, field, period, title)?;
    let stored = store.put(svg.as_bytes(), "svg")?;
    Ok(ChartArtifact {
        artifact_id: stored.artifact_id,
        media_type: stored.media_type,
        path: stored.path,
        title: title.to_string(),
        point_count: cells,
    })
}
