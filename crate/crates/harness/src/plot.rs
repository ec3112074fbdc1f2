//! Log-scale scree plot rendered as a standalone SVG document.

use std::fmt::Write;

use crate::error::{HarnessError, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 130.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 40.0;

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One `<circle>` per eigenvalue and one `<line>` per labelled threshold.
/// Nonpositive eigenvalues sit on the bottom edge of the plot.
pub fn scree_svg(eigenvalues: &[f64], thresholds: &[(String, f64)]) -> Result<String> {
    if eigenvalues.is_empty() {
        return Err(HarnessError::Invalid("scree plot of an empty spectrum".into()));
    }
    if eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(HarnessError::Invalid("scree plot needs finite eigenvalues".into()));
    }
    if let Some((label, t)) = thresholds.iter().find(|(_, t)| !(*t > 0.0 && t.is_finite())) {
        return Err(HarnessError::Invalid(format!("threshold `{label}` must be positive and finite, got {t}")));
    }
    let positive: Vec<f64> = eigenvalues.iter().copied().filter(|&v| v > 0.0).collect();
    if positive.is_empty() {
        return Err(HarnessError::Invalid("scree plot needs at least one positive eigenvalue".into()));
    }
    let all = positive.iter().chain(thresholds.iter().map(|(_, t)| t));
    let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut y_min = lo.log10().floor();
    let y_max = hi.log10().ceil().max(y_min + 1.0);
    if eigenvalues.iter().any(|&v| v <= 0.0) && lo.log10() == y_min {
        y_min -= 1.0;
    }

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let p = eigenvalues.len();
    let x_of = |k: usize| if p == 1 { LEFT + plot_w / 2.0 } else { LEFT + plot_w * k as f64 / (p - 1) as f64 };
    let y_of = |v: f64| {
        let e = if v > 0.0 { v.log10().max(y_min) } else { y_min };
        TOP + plot_h * (y_max - e) / (y_max - y_min)
    };

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<path class="axes" d="M {LEFT} {TOP} V {} H {}" fill="none" stroke="black"/>"#,
        TOP + plot_h,
        LEFT + plot_w
    );
    let mut decade = y_min;
    while decade <= y_max {
        let y = TOP + plot_h * (y_max - decade) / (y_max - y_min);
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" font-size="11" text-anchor="end">1e{decade}</text>"#, LEFT - 6.0, y + 4.0);
        decade += 1.0;
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{}" font-size="12" text-anchor="middle">index k (1..{p})</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    for (k, &v) in eigenvalues.iter().enumerate() {
        let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#, x_of(k), y_of(v));
    }
    for (label, t) in thresholds {
        let y = y_of(*t);
        let _ = writeln!(
            svg,
            r#"<line class="threshold" x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="firebrick" stroke-dasharray="4 3"/>"#,
            LEFT + plot_w
        );
        let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" font-size="11">{}</text>"#, LEFT + plot_w + 6.0, y + 4.0, escape(label));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
