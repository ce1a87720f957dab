//! Self-contained SVG views: plot heatmaps, line series, and boxplots.

use std::fmt::Write as _;

use crate::dataset::DispersionPlot;
use crate::eval::BoxplotStats;
use crate::preprocess::RoiWindow;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 52.0;

const VIRIDIS: [(f64, f64, f64); 5] = [
    (68.0, 1.0, 84.0),
    (59.0, 82.0, 139.0),
    (33.0, 145.0, 140.0),
    (94.0, 201.0, 98.0),
    (253.0, 231.0, 37.0),
];

fn color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (VIRIDIS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    let mix = |x: f64, y: f64| (x + (y - x) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Axis frame mapping data ranges onto the plotting area.
struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| {
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        };
        Self {
            x: widen(x),
            y: widen(y),
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN_L + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN_B - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let (x0, x1) = (frame.px(frame.x.0), frame.px(frame.x.1));
    let (y0, y1) = (frame.py(frame.y.0), frame.py(frame.y.1));
    let _ = writeln!(
        out,
        r##"<path d="M{x0:.1} {y1:.1} L{x0:.1} {y0:.1} L{x1:.1} {y0:.1}" fill="none" stroke="#333333"/>"##
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = frame.x.0 + t * (frame.x.1 - frame.x.0);
        let yv = frame.y.0 + t * (frame.y.1 - frame.y.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            frame.px(xv),
            y0 + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            frame.py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 1.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Compensation voltage runs left to right, separation voltage bottom to
/// top. The optional window is outlined.
pub fn heatmap_svg(plot: &DispersionPlot, roi: Option<&RoiWindow>, title: &str) -> String {
    let usv = plot.usv_grid();
    let ucv = plot.ucv_grid();
    let m = plot.intensity();
    let (lo, hi) = range(m.iter().copied());
    let span = if hi > lo { hi - lo } else { 1.0 };
    let half = |g: &[f64]| if g.len() > 1 { (g[1] - g[0]) / 2.0 } else { 0.5 };
    let (hx, hy) = (half(ucv), half(usv));
    let frame = Frame::new(
        (ucv[0] - hx, ucv[ucv.len() - 1] + hx),
        (usv[0] - hy, usv[usv.len() - 1] + hy),
    );
    let mut out = String::new();
    open(&mut out, title);
    let cw = frame.px(ucv[0] + hx) - frame.px(ucv[0] - hx);
    let ch = frame.py(usv[0] - hy) - frame.py(usv[0] + hy);
    out.push_str("<g shape-rendering=\"crispEdges\">\n");
    for (i, &u) in usv.iter().enumerate() {
        for (j, &c) in ucv.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                frame.px(c - hx),
                frame.py(u + hy),
                cw + 0.05,
                ch + 0.05,
                color((m[(i, j)] - lo) / span)
            );
        }
    }
    out.push_str("</g>\n");
    if let Some(r) = roi {
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#ff3030" stroke-width="2"/>"##,
            frame.px(r.ucv_lo - hx),
            frame.py(r.usv_hi + hy),
            frame.px(r.ucv_hi + hx) - frame.px(r.ucv_lo - hx),
            frame.py(r.usv_lo - hy) - frame.py(r.usv_hi + hy)
        );
    }
    axes(&mut out, &frame, "compensation voltage [V]", "separation voltage [V]");
    out.push_str("</svg>\n");
    out
}

/// A single series with an optional shaded band `[lo, hi]` along x.
pub fn line_svg(points: &[(f64, f64)], band: Option<(f64, f64)>, title: &str, x_label: &str, y_label: &str) -> String {
    let frame = Frame::new(
        range(points.iter().map(|p| p.0)),
        range(points.iter().map(|p| p.1)),
    );
    let mut out = String::new();
    open(&mut out, title);
    if let Some((lo, hi)) = band {
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#3cb44b" fill-opacity="0.3"/>"##,
            frame.px(lo),
            frame.py(frame.y.1),
            frame.px(hi) - frame.px(lo),
            frame.py(frame.y.0) - frame.py(frame.y.1)
        );
    }
    let path: Vec<String> = points
        .iter()
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
        .collect();
    let _ = writeln!(
        out,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="1.5"/>"##,
        path.join(" ")
    );
    axes(&mut out, &frame, x_label, y_label);
    out.push_str("</svg>\n");
    out
}

/// One box per named group, whiskers at the reported extremes, outliers as
/// circles.
pub fn boxplot_svg(groups: &[(String, BoxplotStats)], title: &str, y_label: &str) -> String {
    let all = groups.iter().flat_map(|(_, b)| {
        [b.whisker_lo, b.whisker_hi]
            .into_iter()
            .chain(b.outliers.iter().copied())
    });
    let (lo, hi) = range(all);
    let pad = ((hi - lo) * 0.05).max(0.01);
    let n = groups.len().max(1) as f64;
    let frame = Frame::new((0.0, n), (lo - pad, hi + pad));
    let mut out = String::new();
    open(&mut out, title);
    let (y0, y1) = (frame.py(frame.y.0), frame.py(frame.y.1));
    let x0 = frame.px(0.0);
    let _ = writeln!(
        out,
        r##"<path d="M{x0:.1} {y1:.1} L{x0:.1} {y0:.1} L{:.1} {y0:.1}" fill="none" stroke="#333333"/>"##,
        frame.px(n)
    );
    for i in 0..=4 {
        let yv = frame.y.0 + i as f64 / 4.0 * (frame.y.1 - frame.y.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            frame.py(yv) + 4.0,
            tick(yv)
        );
    }
    let box_w = (frame.px(1.0) - frame.px(0.0)) * 0.5;
    for (i, (name, b)) in groups.iter().enumerate() {
        let cx = frame.px(i as f64 + 0.5);
        let _ = writeln!(out, r#"<g class="box">"#);
        let _ = writeln!(
            out,
            r##"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="#333333"/>"##,
            frame.py(b.whisker_lo),
            frame.py(b.whisker_hi)
        );
        for w in [b.whisker_lo, b.whisker_hi] {
            let _ = writeln!(
                out,
                r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#333333"/>"##,
                cx - box_w / 4.0,
                frame.py(w),
                cx + box_w / 4.0,
                frame.py(w)
            );
        }
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{box_w:.2}" height="{:.2}" fill="#9ecae1" stroke="#333333"/>"##,
            cx - box_w / 2.0,
            frame.py(b.q3),
            (frame.py(b.q1) - frame.py(b.q3)).max(1.0)
        );
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="#d62728" stroke-width="2"/>"##,
            cx - box_w / 2.0,
            frame.py(b.median),
            cx + box_w / 2.0,
            frame.py(b.median)
        );
        for &o in &b.outliers {
            let _ = writeln!(
                out,
                r##"<circle cx="{cx:.2}" cy="{:.2}" r="3" fill="none" stroke="#333333"/>"##,
                frame.py(o)
            );
        }
        let _ = writeln!(out, "</g>");
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.1}" text-anchor="middle">{}</text>"#,
            y0 + 16.0,
            escape(name)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::boxplot_stats;
    use ndarray::Array2;

    #[test]
    fn heatmap_has_one_cell_per_pixel() {
        let plot = DispersionPlot::new(vec![1.0, 2.0], vec![0.0, 0.5, 1.0], Array2::from_elem((2, 3), 1.0)).unwrap();
        let svg = heatmap_svg(&plot, None, "t");
        assert_eq!(svg.matches("<rect x=").count(), 6);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn boxplot_draws_each_group() {
        let b = boxplot_stats(&[0.8, 0.9, 0.85, 0.2]).unwrap();
        let svg = boxplot_svg(&[("A".into(), b.clone()), ("B".into(), b)], "acc", "accuracy");
        assert_eq!(svg.matches(r#"<g class="box">"#).count(), 2);
    }

    #[test]
    fn colors_span_the_map() {
        assert_eq!(color(0.0), "#440154");
        assert_eq!(color(1.0), "#fde725");
        assert_eq!(color(f64::NAN), "#440154");
    }

    #[test]
    fn titles_are_escaped() {
        let svg = line_svg(&[(0.0, 1.0), (1.0, 2.0)], Some((0.2, 0.4)), "a<b", "x", "y");
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("fill-opacity"));
    }
}
