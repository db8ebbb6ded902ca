//! Minimal SVG line plots of one trace column against time.

use std::fmt::Write;

use eeqcbf_core::simloop::SimTrace;

use crate::error::CliError;
use crate::trace::{column, fmt_num};

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 500.0;
pub const MARGIN: f64 = 60.0;
const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn padded(lo: f64, hi: f64) -> Self {
        let (lo, hi) = if hi > lo {
            (lo, hi)
        } else {
            let half = if lo == 0.0 { 1.0 } else { lo.abs() * 0.5 };
            (lo - half, hi + half)
        };
        let pad = 0.05 * (hi - lo);
        Self {
            lo: lo - pad,
            hi: hi + pad,
        }
    }

    fn map(&self, v: f64, from: f64, to: f64) -> f64 {
        from + (v - self.lo) / (self.hi - self.lo) * (to - from)
    }

    fn ticks(&self) -> Vec<f64> {
        let raw = (self.hi - self.lo) / 6.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .into_iter()
            .map(|k| k * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn tick_label(v: f64) -> String {
    // Snap values like 0.30000000000000004 before formatting.
    fmt_num((v * 1e9).round() / 1e9)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Plots `quantity` against `t` for each labelled trace.
pub fn emit_plot(traces: &[(&str, &SimTrace)], quantity: &str) -> Result<String, CliError> {
    if quantity.is_empty() {
        return Err(CliError::Argument("plot quantity must not be empty".into()));
    }
    if traces.is_empty() || traces.iter().any(|(_, tr)| tr.samples.is_empty()) {
        return Err(CliError::Argument(
            "plot needs at least one non-empty trace".into(),
        ));
    }
    let mut series = Vec::with_capacity(traces.len());
    for (label, tr) in traces {
        let ys = column(tr, quantity)
            .ok_or_else(|| CliError::Argument(format!("unknown plot quantity {quantity:?}")))?;
        let ts: Vec<f64> = tr.samples.iter().map(|s| s.t).collect();
        series.push((*label, ts, ys));
    }

    let finite = |v: &&f64| v.is_finite();
    let t_lo = series
        .iter()
        .flat_map(|s| s.1.iter())
        .filter(finite)
        .fold(f64::INFINITY, |a, b| a.min(*b));
    let t_hi = series
        .iter()
        .flat_map(|s| s.1.iter())
        .filter(finite)
        .fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let y_lo = series
        .iter()
        .flat_map(|s| s.2.iter())
        .filter(finite)
        .fold(0.0, |a: f64, b| a.min(*b));
    let y_hi = series
        .iter()
        .flat_map(|s| s.2.iter())
        .filter(finite)
        .fold(0.0, |a: f64, b| a.max(*b));
    let xa = Axis::padded(t_lo, t_hi);
    let ya = Axis::padded(y_lo, y_hi);

    let (left, right) = (MARGIN, WIDTH - MARGIN);
    let (top, bottom) = (MARGIN, HEIGHT - MARGIN);
    let px = |t: f64| xa.map(t, left, right);
    let py = |y: f64| ya.map(y, bottom, top);

    let mut svg = String::new();
    let w = &mut svg;
    // Writing into a String cannot fail.
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        w,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        w,
        r#"<rect x="{left}" y="{top}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        right - left,
        bottom - top
    );
    for t in xa.ticks() {
        let x = px(t);
        let _ = writeln!(
            w,
            r#"<line x1="{x:.2}" y1="{bottom}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#,
            bottom + 5.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            bottom + 20.0,
            tick_label(t)
        );
    }
    for v in ya.ticks() {
        let y = py(v);
        let _ = writeln!(
            w,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/>"#,
            left - 5.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 8.0,
            y + 4.0,
            tick_label(v)
        );
    }
    let zero = py(0.0);
    let _ = writeln!(
        w,
        r#"<line class="zero" x1="{left}" y1="{zero:.2}" x2="{right}" y2="{zero:.2}" stroke="gray" stroke-dasharray="4 4"/>"#
    );
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t</text>"#,
        (left + right) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        w,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">{}</text>"#,
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(quantity)
    );

    for (i, (label, ts, ys)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = ts
            .iter()
            .zip(ys)
            .filter(|(t, y)| t.is_finite() && y.is_finite())
            .map(|(t, y)| format!("{:.2},{:.2}", px(*t), py(*y)))
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 15.0 + 18.0 * i as f64;
        let _ = writeln!(
            w,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/>"#,
            right - 150.0,
            right - 125.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            right - 120.0,
            ly + 4.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
