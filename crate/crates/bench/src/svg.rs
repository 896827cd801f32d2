//! Minimal deterministic SVG line plots with a logarithmic y-axis.

use std::fmt::Write as _;
use std::path::Path;

use hd_core::Error;

use crate::error::{BenchError, Result};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 50.0;
const LEGEND_ROW: f64 = 16.0;

/// One polyline. Series sharing a label share a single legend entry.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(x, y)`; points with `y ≤ 0` or non-finite coordinates are skipped
    /// and split the line.
    pub points: Vec<(f64, f64)>,
    /// Index into a fixed palette.
    pub color: usize,
    pub opacity: f64,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, color: usize) -> Self {
        Self {
            label: label.into(),
            points,
            color,
            opacity: 1.0,
        }
    }

    pub fn with_opacity(mut self, opacity: f64) -> Self {
        self.opacity = opacity.clamp(0.05, 1.0);
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotStyle {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub width: f64,
    pub height: f64,
}

impl PlotStyle {
    pub fn new(
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
    ) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            width: 760.0,
            height: 460.0,
        }
    }
}

fn plottable(p: &(f64, f64)) -> bool {
    p.0.is_finite() && p.1.is_finite() && p.1 > 0.0
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders the series as a standalone SVG document. The output depends only
/// on the input, byte for byte.
pub fn render_svg(series: &[Series], style: &PlotStyle) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::Empty("plot series").into());
    }
    let pts = || {
        series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter(|p| plottable(p))
    };
    if pts().next().is_none() {
        return Err(BenchError::Config(
            "no point has a positive finite y value to plot on a log axis".into(),
        ));
    }
    let (mut x_lo, mut x_hi) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.0), hi.max(p.0))
    });
    let (y_min, y_max) = pts().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.1), hi.max(p.1))
    });
    if x_hi <= x_lo {
        x_lo -= 0.5;
        x_hi += 0.5;
    }
    let mut d_lo = y_min.log10().floor();
    let mut d_hi = y_max.log10().ceil();
    if d_hi <= d_lo {
        d_lo -= 1.0;
        d_hi += 1.0;
    }

    let (w, h) = (style.width, style.height);
    let plot_w = w - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = h - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (d_hi - y.log10()) / (d_hi - d_lo) * plot_h;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(&style.title)
    );

    // Decade grid lines and labels.
    let decades = (d_hi - d_lo) as i64;
    let stride = ((decades + 9) / 10).max(1);
    for i in (0..=decades).step_by(stride as usize) {
        let d = d_lo + i as f64;
        let y = sy(10f64.powf(d));
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN_LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd"/>"##,
            MARGIN_LEFT + plot_w
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{}</text>"#,
            MARGIN_LEFT - 6.0,
            y + 4.0,
            d as i64
        );
    }
    for i in 0..=4 {
        let x = x_lo + (x_hi - x_lo) * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(x),
            MARGIN_TOP + plot_h + 16.0,
            format_tick(x)
        );
    }
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN_LEFT:.2}" y="{MARGIN_TOP:.2}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#333333"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        h - 12.0,
        escape(&style.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(&style.y_label)
    );

    for s in series {
        let color = PALETTE[s.color % PALETTE.len()];
        for segment in s
            .points
            .split(|p| !plottable(p))
            .filter(|seg| !seg.is_empty())
        {
            if segment.len() == 1 {
                let (x, y) = segment[0];
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}" fill-opacity="{:.3}"/>"#,
                    sx(x),
                    sy(y),
                    s.opacity
                );
                continue;
            }
            let coords: Vec<String> = segment
                .iter()
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-opacity="{:.3}" stroke-width="1.5" points="{}"/>"#,
                s.opacity,
                coords.join(" ")
            );
        }
    }

    let mut seen: Vec<(&str, usize)> = Vec::new();
    for s in series {
        if !seen.iter().any(|(l, _)| *l == s.label) {
            seen.push((&s.label, s.color));
        }
    }
    let lx = MARGIN_LEFT + plot_w + 12.0;
    for (i, (label, color)) in seen.iter().enumerate() {
        let y = MARGIN_TOP + 10.0 + i as f64 * LEGEND_ROW;
        let c = PALETTE[color % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{c}" stroke-width="2"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 24.0,
            y + 4.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn format_tick(x: f64) -> String {
    if x == x.round() && x.abs() < 1e9 {
        format!("{}", x as i64)
    } else {
        format!("{x:.3}")
    }
}

/// Renders and writes an SVG file.
pub fn emit_svg(path: &Path, series: &[Series], style: &PlotStyle) -> Result<()> {
    let svg = render_svg(series, style)?;
    std::fs::write(path, svg).map_err(|e| BenchError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn style() -> PlotStyle {
        PlotStyle::new("t", "iteration", "error")
    }

    #[test]
    fn empty_input_rejected() {
        assert!(render_svg(&[], &style()).is_err());
        assert!(render_svg(&[Series::new("a", vec![], 0)], &style()).is_err());
    }

    #[test]
    fn nonpositive_only_rejected() {
        assert!(render_svg(
            &[Series::new("a", vec![(0.0, 0.0), (1.0, -1.0)], 0)],
            &style()
        )
        .is_err());
    }

    #[test]
    fn single_point_renders_dot() {
        let svg = render_svg(&[Series::new("a", vec![(1.0, 1e-3)], 0)], &style()).unwrap();
        assert!(svg.contains("<circle"));
        assert!(!svg.contains("<polyline"));
    }

    #[test]
    fn gap_splits_line() {
        let pts = vec![(1.0, 1.0), (2.0, 0.5), (3.0, 0.0), (4.0, 0.1), (5.0, 0.01)];
        let svg = render_svg(&[Series::new("a", pts, 1)], &style()).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn legend_deduplicates_labels() {
        let s = vec![
            Series::new("gd", vec![(1.0, 1.0), (2.0, 0.1)], 0),
            Series::new("gd", vec![(1.0, 2.0), (2.0, 0.2)], 0).with_opacity(0.5),
        ];
        let svg = render_svg(&s, &style()).unwrap();
        assert_eq!(svg.matches(">gd</text>").count(), 1);
    }

    #[test]
    fn labels_are_escaped() {
        let svg = render_svg(
            &[Series::new("a<b", vec![(1.0, 1.0), (2.0, 2.0)], 0)],
            &style(),
        )
        .unwrap();
        assert!(svg.contains("a&lt;b"));
    }

    #[test]
    fn output_is_deterministic() {
        let s = vec![Series::new(
            "x",
            (1..50).map(|k| (k as f64, 1.0 / k as f64)).collect(),
            2,
        )];
        assert_eq!(
            render_svg(&s, &style()).unwrap(),
            render_svg(&s, &style()).unwrap()
        );
    }
}
