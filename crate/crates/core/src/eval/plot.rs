//! Hand-written SVG line charts with shaded confidence bands.

use super::{AggregateCurve, EvalError};
use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct PlotCurve<'a> {
    pub name: &'a str,
    pub curve: &'a AggregateCurve,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Solved ratio (y, fixed to `[0, 1]`) against env steps (x). Output bytes are a
/// pure function of the inputs.
pub fn plot_svg(curves: &[PlotCurve<'_>], title: &str) -> Result<String, EvalError> {
    if curves.is_empty() {
        return Err(EvalError::Plot("no curves".into()));
    }
    if let Some(c) = curves.iter().find(|c| c.curve.env_steps.is_empty()) {
        return Err(EvalError::Plot(format!("curve {} has no points", c.name)));
    }
    let x_max = curves.iter().flat_map(|c| c.curve.env_steps.iter().copied()).max().unwrap_or(0).max(1) as f64;
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: u64| LEFT + x as f64 / x_max * pw;
    let sy = |y: f64| TOP + (1.0 - y.clamp(0.0, 1.0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        esc(title)
    );
    for i in 0..=4 {
        let y = i as f64 / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.2}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="#dddddd"/>"##,
            sy(y),
            LEFT + pw
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y:.2}</text>"#, LEFT - 6.0, sy(y) + 4.0);
    }
    for i in 0..=4 {
        let x = (x_max * i as f64 / 4.0).round() as u64;
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{x}</text>"#, sx(x), TOP + ph + 18.0);
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">env steps</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">solved ratio</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    for (i, pc) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let c = pc.curve;
        let upper = c
            .env_steps
            .iter()
            .zip(c.mean.iter().zip(&c.half_width))
            .map(|(&x, (m, h))| format!("{:.2},{:.2}", sx(x), sy(m + h)));
        let lower = c
            .env_steps
            .iter()
            .zip(c.mean.iter().zip(&c.half_width))
            .rev()
            .map(|(&x, (m, h))| format!("{:.2},{:.2}", sx(x), sy(m - h)));
        let band: Vec<String> = upper.chain(lower).collect();
        let _ = writeln!(s, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
        let line: Vec<String> = c.env_steps.iter().zip(&c.mean).map(|(&x, &m)| format!("{:.2},{:.2}", sx(x), sy(m))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" "));
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/>"#,
            lx + 20.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, esc(pc.name));
    }
    s.push_str("</svg>\n");
    Ok(s)
}
