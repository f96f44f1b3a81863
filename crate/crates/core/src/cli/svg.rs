//! Hand-written SVG for frontier plots.
//!
//! Two panels, utility and constraint, share an ordinal x-axis with one
//! tick per distinct epsilon (infinity has no place on a linear axis). Each
//! panel draws the seed-median polyline over a min-max band.

use std::fmt::Write;

use crate::pipeline::FrontierSummary;

const PANEL_W: f64 = 360.0;
const PANEL_H: f64 = 240.0;
const MARGIN: f64 = 50.0;

fn label(e: f64) -> String {
    if e.is_infinite() {
        "inf".into()
    } else {
        format!("{e:.3}")
    }
}

struct Series<'a> {
    title: &'a str,
    median: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    color: &'a str,
}

fn panel(out: &mut String, ox: f64, s: &Series, ticks: &[String]) {
    let n = ticks.len();
    let x = |i: usize| {
        if n == 1 {
            ox + PANEL_W / 2.0
        } else {
            ox + PANEL_W * i as f64 / (n - 1) as f64
        }
    };
    let mut ymin = s.lo.iter().copied().fold(f64::INFINITY, f64::min);
    let mut ymax = s.hi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(ymax > ymin) {
        ymin -= 0.5;
        ymax += 0.5;
    }
    let y = |v: f64| MARGIN + PANEL_H * (1.0 - (v - ymin) / (ymax - ymin));
    let bottom = MARGIN + PANEL_H;

    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
        ox + PANEL_W / 2.0,
        MARGIN - 20.0,
        s.title
    );
    let _ = writeln!(
        out,
        r#"<polyline points="{ox:.2},{MARGIN:.2} {ox:.2},{bottom:.2} {:.2},{bottom:.2}" fill="none" stroke="black"/>"#,
        ox + PANEL_W
    );
    for (i, t) in ticks.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<g class="xtick"><line x1="{0:.2}" y1="{1:.2}" x2="{0:.2}" y2="{2:.2}" stroke="black"/><text x="{0:.2}" y="{3:.2}" text-anchor="middle" font-size="10">{4}</text></g>"#,
            x(i),
            bottom,
            bottom + 5.0,
            bottom + 18.0,
            t
        );
    }
    for (v, anchor) in [(ymin, bottom), (ymax, MARGIN)] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end" font-size="10">{:.4}</text>"#,
            ox - 4.0,
            anchor + 3.0,
            v
        );
    }
    let mut band: Vec<String> = (0..n).map(|i| format!("{:.2},{:.2}", x(i), y(s.hi[i]))).collect();
    band.extend((0..n).rev().map(|i| format!("{:.2},{:.2}", x(i), y(s.lo[i]))));
    let _ = writeln!(
        out,
        r#"<polygon points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"#,
        band.join(" "),
        s.color
    );
    let line: Vec<String> = (0..n).map(|i| format!("{:.2},{:.2}", x(i), y(s.median[i]))).collect();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
        line.join(" "),
        s.color
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="11">epsilon</text>"#,
        ox + PANEL_W / 2.0,
        bottom + 34.0
    );
}

/// Renders the summaries (ascending epsilon) as a standalone SVG document.
pub fn frontier_svg(summary: &[FrontierSummary]) -> String {
    let ticks: Vec<String> = summary.iter().map(|s| label(s.epsilon)).collect();
    let width = 3.0 * MARGIN + 2.0 * PANEL_W + MARGIN;
    let height = 2.0 * MARGIN + PANEL_H + 20.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let utility = Series {
        title: "utility",
        median: summary.iter().map(|s| s.utility_median).collect(),
        lo: summary.iter().map(|s| s.utility_min).collect(),
        hi: summary.iter().map(|s| s.utility_max).collect(),
        color: "#1f77b4",
    };
    let constraint = Series {
        title: "constraint",
        median: summary.iter().map(|s| s.constraint_median).collect(),
        lo: summary.iter().map(|s| s.constraint_min).collect(),
        hi: summary.iter().map(|s| s.constraint_max).collect(),
        color: "#d62728",
    };
    panel(&mut out, 1.5 * MARGIN, &utility, &ticks);
    panel(&mut out, 3.0 * MARGIN + PANEL_W, &constraint, &ticks);
    out.push_str("</svg>\n");
    out
}
