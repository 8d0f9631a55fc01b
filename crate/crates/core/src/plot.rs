//! Minimal SVG line charts for time series.

use std::fmt::Write as _;

use crate::lti::TimeSeries;

const WIDTH: f64 = 640.0;
const PANEL_HEIGHT: f64 = 160.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 24.0;
const GAP: f64 = 28.0;
const MAX_POINTS: usize = 2000;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * lo.abs().max(1e-300) {
        let pad = if lo == 0.0 { 1.0 } else { 0.01 * lo.abs() };
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

/// One panel per group, stacked vertically and sharing the time axis.
/// Each group is a title and the channels drawn in it.
pub fn stacked_chart(trace: &TimeSeries, groups: &[(String, Vec<String>)]) -> String {
    let t = trace.t();
    let height = MARGIN_TOP + groups.len() as f64 * (PANEL_HEIGHT + GAP);
    let stride = t.len().div_ceil(MAX_POINTS).max(1);
    let (t0, t1) = range(t.iter().copied());
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    for (g, (title, names)) in groups.iter().enumerate() {
        let top = MARGIN_TOP + g as f64 * (PANEL_HEIGHT + GAP);
        let channels: Vec<(&str, &[f64])> = names
            .iter()
            .filter_map(|n| trace.channel(n).map(|v| (n.as_str(), v)))
            .collect();
        let (y0, y1) = range(channels.iter().flat_map(|(_, v)| v.iter().copied()));
        let x = |v: f64| MARGIN_LEFT + (v - t0) / (t1 - t0) * plot_w;
        let y = |v: f64| top + PANEL_HEIGHT - (v - y0) / (y1 - y0) * PANEL_HEIGHT;

        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_LEFT}" y="{top}" width="{plot_w}" height="{PANEL_HEIGHT}" fill="none" stroke="gray"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{MARGIN_LEFT}" y="{}">{}</text>"#,
            top - 6.0,
            escape(title)
        );
        let _ = writeln!(s, r#"<text x="4" y="{}">{:.4}</text>"#, top + 10.0, y1);
        let _ = writeln!(
            s,
            r#"<text x="4" y="{}">{:.4}</text>"#,
            top + PANEL_HEIGHT,
            y0
        );
        for (c, (name, v)) in channels.iter().enumerate() {
            let color = COLORS[c % COLORS.len()];
            let mut pts = String::new();
            for k in (0..t.len())
                .step_by(stride)
                .chain(std::iter::once(t.len() - 1))
            {
                if v[k].is_finite() {
                    let _ = write!(pts, "{:.2},{:.2} ", x(t[k]), y(v[k]));
                }
            }
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#,
                pts.trim_end()
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
                MARGIN_LEFT + 8.0 + 110.0 * c as f64,
                top + 14.0,
                escape(name)
            );
        }
    }
    let bottom = height - 6.0;
    let _ = writeln!(s, r#"<text x="{MARGIN_LEFT}" y="{bottom}">{t0} s</text>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{bottom}" text-anchor="end">{t1} s</text>"#,
        WIDTH - MARGIN_RIGHT
    );
    s.push_str("</svg>\n");
    s
}
