//! Minimal deterministic SVG line charts with error bars.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 180.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// A named line; each point is `(x, y, y_lo, y_hi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64, f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the series on shared axes. With `log_x`, the x axis is log10 and
/// non-positive x values are dropped.
pub fn svg_chart(title: &str, x_label: &str, y_label: &str, log_x: bool, series: &[Series]) -> String {
    let tx = |x: f64| if log_x { x.log10() } else { x };
    let pts = || series.iter().flat_map(|s| s.points.iter()).filter(|p| !log_x || p.0 > 0.0);
    let finite = |v: f64| v.is_finite();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y, lo, hi) in pts() {
        let x = tx(x);
        if finite(x) {
            x0 = x0.min(x);
            x1 = x1.max(x);
        }
        for v in [y, lo, hi].into_iter().filter(|v| finite(*v)) {
            y0 = y0.min(v);
            y1 = y1.max(v);
        }
    }
    if !(x0 <= x1) {
        (x0, x1) = (0.0, 1.0);
    }
    if !(y0 <= y1) {
        (y0, y1) = (0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        (x0, x1) = (x0 - 0.5, x1 + 0.5);
    }
    let pad = ((y1 - y0) * 0.05).max(1e-9);
    let (y0, y1) = (y0 - pad, y1 + pad);
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let px = |x: f64| MARGIN_LEFT + (tx(x) - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| MARGIN_TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="24" font-size="14" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );
    for i in 0..=4 {
        let v = y0 + (y1 - y0) * i as f64 / 4.0;
        let y = py(v);
        let _ = writeln!(s, r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, MARGIN_LEFT + plot_w);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#, MARGIN_LEFT - 6.0, y + 4.0);
    }
    let mut ticks: Vec<f64> = pts().map(|p| p.0).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in ticks {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#,
            px(x),
            MARGIN_TOP + plot_h + 16.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    );
    for (k, ser) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let visible: Vec<_> = ser.points.iter().filter(|p| (!log_x || p.0 > 0.0) && p.1.is_finite()).collect();
        let path: Vec<String> = visible.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
        if !path.is_empty() {
            let _ = writeln!(s, r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        }
        for p in &visible {
            let x = px(p.0);
            if p.2.is_finite() && p.3.is_finite() {
                let _ = writeln!(
                    s,
                    r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="{colour}"/>"#,
                    py(p.2),
                    py(p.3)
                );
            }
            let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{:.2}" r="3" fill="{colour}"/>"#, py(p.1));
        }
        let ly = MARGIN_TOP + 10.0 + 18.0 * k as f64;
        let lx = MARGIN_LEFT + plot_w + 12.0;
        let _ = writeln!(s, r#"<rect x="{lx:.2}" y="{:.2}" width="12" height="12" fill="{colour}"/>"#, ly - 10.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#, lx + 18.0, escape(&ser.name));
    }
    s.push_str("</svg>\n");
    s
}
