//! Minimal static SVG line charts: stacked panels, each with axes, ticks,
//! polylines and optional shaded bands.

use std::fmt::Write as _;

const WIDTH: f64 = 900.0;
const PANEL_HEIGHT: f64 = 260.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 36.0;
const MARGIN_BOTTOM: f64 = 46.0;
/// Longest polyline emitted; longer series are decimated.
const MAX_POINTS: usize = 4000;

pub const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

pub struct Line {
    pub label: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub color: String,
    pub dashed: bool,
}

/// Shaded region between `lo` and `hi`.
pub struct Band {
    pub xs: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub color: String,
}

pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub lines: Vec<Line>,
    pub bands: Vec<Band>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn stride(len: usize) -> usize {
    len.div_ceil(MAX_POINTS).max(1)
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        let pad = lo.abs().max(1.0) * 0.05;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick_label(v: f64) -> String {
    if v == 0.0 || (1e-3..1e4).contains(&v.abs()) {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{v:.1e}")
    }
}

fn render_panel(out: &mut String, p: &Panel, top: f64) {
    let (x0, x1) = bounds(p.lines.iter().flat_map(|l| l.xs.iter().copied()).chain(p.bands.iter().flat_map(|b| b.xs.iter().copied())));
    let (y0, y1) = bounds(
        p.lines
            .iter()
            .flat_map(|l| l.ys.iter().copied())
            .chain(p.bands.iter().flat_map(|b| b.lo.iter().chain(&b.hi).copied())),
    );
    let left = MARGIN_LEFT;
    let right = WIDTH - MARGIN_RIGHT;
    let upper = top + MARGIN_TOP;
    let lower = top + PANEL_HEIGHT - MARGIN_BOTTOM;
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * (right - left);
    let sy = |y: f64| lower - (y - y0) / (y1 - y0) * (lower - upper);

    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="15" text-anchor="middle">{}</text>"#, (left + right) / 2.0, top + 22.0, escape(&p.title));
    let _ = writeln!(out, r##"<rect x="{left:.1}" y="{upper:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#444"/>"##, right - left, lower - upper);
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(out, r##"<line x1="{px:.1}" y1="{lower:.1}" x2="{px:.1}" y2="{:.1}" stroke="#444"/>"##, lower + 5.0);
        let _ = writeln!(out, r#"<text x="{px:.1}" y="{:.1}" font-size="11" text-anchor="middle">{}</text>"#, lower + 18.0, tick_label(xv));
        let _ = writeln!(out, r##"<line x1="{:.1}" y1="{py:.1}" x2="{left:.1}" y2="{py:.1}" stroke="#444"/>"##, left - 5.0);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{}</text>"#, left - 8.0, py + 4.0, tick_label(yv));
    }
    let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="12" text-anchor="middle">{}</text>"#, (left + right) / 2.0, lower + 38.0, escape(&p.x_label));
    let (lx, ly) = (22.0, (upper + lower) / 2.0);
    let _ = writeln!(out, r#"<text x="{lx:.1}" y="{ly:.1}" font-size="12" text-anchor="middle" transform="rotate(-90 {lx:.1} {ly:.1})">{}</text>"#, escape(&p.y_label));

    for b in &p.bands {
        let s = stride(b.xs.len());
        let mut pts = String::new();
        let idx: Vec<usize> = (0..b.xs.len()).step_by(s).collect();
        for &i in &idx {
            let _ = write!(pts, "{:.2},{:.2} ", sx(b.xs[i]), sy(b.hi[i]));
        }
        for &i in idx.iter().rev() {
            let _ = write!(pts, "{:.2},{:.2} ", sx(b.xs[i]), sy(b.lo[i]));
        }
        let _ = writeln!(out, r#"<polygon points="{}" fill="{}" fill-opacity="0.2" stroke="none"/>"#, pts.trim_end(), b.color);
    }
    for (n, l) in p.lines.iter().enumerate() {
        let s = stride(l.xs.len());
        let mut pts = String::new();
        for i in (0..l.xs.len()).step_by(s) {
            if l.ys[i].is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(l.xs[i]), sy(l.ys[i]));
            }
        }
        let dash = if l.dashed { r#" stroke-dasharray="6 3""# } else { "" };
        let _ = writeln!(out, r#"<polyline class="series" points="{}" fill="none" stroke="{}" stroke-width="1.3"{dash}><title>{}</title></polyline>"#, pts.trim_end(), l.color, escape(&l.label));
        let ky = upper + 14.0 + 18.0 * n as f64;
        let _ = writeln!(out, r#"<line x1="{:.1}" y1="{ky:.1}" x2="{:.1}" y2="{ky:.1}" stroke="{}" stroke-width="2"{dash}/>"#, right + 10.0, right + 30.0, l.color);
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" font-size="11">{}</text>"#, right + 35.0, ky + 4.0, escape(&l.label));
    }
}

pub fn render(panels: &[Panel]) -> String {
    let height = PANEL_HEIGHT * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, i as f64 * PANEL_HEIGHT);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(label: &str, n: usize) -> Line {
        Line {
            label: label.into(),
            xs: (0..n).map(|i| i as f64).collect(),
            ys: (0..n).map(|i| (i as f64).sin()).collect(),
            color: PALETTE[0].into(),
            dashed: false,
        }
    }

    #[test]
    fn one_polyline_per_series() {
        let p = Panel {
            title: "a < b".into(),
            x_label: "t".into(),
            y_label: "y".into(),
            lines: vec![line("x", 10), line("y", 10)],
            bands: vec![],
        };
        let s = render(&[p]);
        assert!(s.starts_with("<svg"));
        assert_eq!(s.matches("<polyline class=\"series\"").count(), 2);
        assert!(s.contains("a &lt; b"));
    }

    #[test]
    fn long_series_decimated() {
        let p = Panel {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            lines: vec![line("x", 20_000)],
            bands: vec![],
        };
        let s = render(&[p]);
        let pts = s.lines().find(|l| l.contains("<polyline")).unwrap();
        assert!(pts.matches(',').count() <= MAX_POINTS);
    }

    #[test]
    fn constant_series_has_finite_scale() {
        let mut l = line("c", 5);
        l.ys = vec![2.0; 5];
        let s = render(&[Panel {
            title: String::new(),
            x_label: String::new(),
            y_label: String::new(),
            lines: vec![l],
            bands: vec![],
        }]);
        assert!(!s.contains("NaN") && !s.contains("inf"));
    }
}
