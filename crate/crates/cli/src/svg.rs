//! Minimal self-contained SVG line plots.

use std::fmt::Write;

use anyhow::{bail, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 20.0;
const BOTTOM: f64 = 60.0;
const TICKS: usize = 5;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn span(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Line plot with one polyline per series, linear axes and a legend.
pub fn emit_svg(series: &[Series], x_label: &str, y_label: &str) -> Result<String> {
    if series.is_empty() {
        bail!("plot has no series");
    }
    for s in series {
        if s.points.len() < 2 {
            bail!("series `{}` has {} point(s), needs at least 2", s.name, s.points.len());
        }
        if s.points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            bail!("series `{}` has a non-finite point", s.name);
        }
    }
    let all = || series.iter().flat_map(|s| s.points.iter().copied());
    let (x0, x1) = span(all().map(|p| p.0));
    let (y0, y1) = span(all().map(|p| p.1));
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * plot_w;
    let py = |y: f64| TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut out = String::new();
    let w = &mut out;
    writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#)?;
    writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    )?;
    writeln!(w, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#)?;
    writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    )?;
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let (x, y) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (sx, sy) = (px(x), py(y));
        let base = TOP + plot_h;
        writeln!(w, r#"<line x1="{sx:.2}" y1="{base}" x2="{sx:.2}" y2="{:.2}" stroke="black"/>"#, base + 5.0)?;
        writeln!(
            w,
            r#"<text x="{sx:.2}" y="{:.2}" text-anchor="middle">{x:.4}</text>"#,
            base + 18.0
        )?;
        writeln!(w, r#"<line x1="{:.2}" y1="{sy:.2}" x2="{LEFT}" y2="{sy:.2}" stroke="black"/>"#, LEFT - 5.0)?;
        writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y:.4}</text>"#,
            LEFT - 8.0,
            sy + 4.0
        )?;
    }
    writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    )?;
    writeln!(
        w,
        r#"<text x="15" y="{0:.2}" text-anchor="middle" transform="rotate(-90 15 {0:.2})">{1}</text>"#,
        TOP + plot_h / 2.0,
        escape(y_label)
    )?;
    for (i, s) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = s.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        writeln!(
            w,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        )?;
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 15.0;
        writeln!(
            w,
            r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{color}" stroke-width="1.5"/>"#,
            lx + 20.0
        )?;
        writeln!(w, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 26.0, ly + 4.0, escape(&s.name))?;
    }
    writeln!(w, "</svg>")?;
    Ok(out)
}
