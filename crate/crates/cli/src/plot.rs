//! Minimal static SVG line charts.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const MAX_POINTS: usize = 2000;

pub struct Series<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub color: &'a str,
}

fn finite_range<'a>(vals: impl Iterator<Item = &'a f64>) -> Option<(f64, f64)> {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    (lo <= hi).then_some((lo, hi))
}

fn pad((lo, hi): (f64, f64)) -> (f64, f64) {
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        (lo - 1.0, hi + 1.0)
    } else {
        let m = 0.05 * (hi - lo);
        (lo - m, hi + m)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders the series on shared axes. NaN samples break the line.
pub fn line_chart(title: &str, x_label: &str, series: &[Series<'_>]) -> String {
    let xr = finite_range(series.iter().flat_map(|s| s.x.iter())).unwrap_or((0.0, 1.0));
    let yr = finite_range(series.iter().flat_map(|s| s.y.iter())).unwrap_or((-1.0, 1.0));
    let (x0, x1) = if xr.1 > xr.0 { xr } else { pad(xr) };
    let (y0, y1) = pad(yr);
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_T + (y1 - y) / (y1 - y0) * ph;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for i in 0..=5 {
        let fx = x0 + (x1 - x0) * i as f64 / 5.0;
        let fy = y0 + (y1 - y0) * i as f64 / 5.0;
        let _ = writeln!(
            out,
            r##"<line x1="{0:.1}" y1="{1}" x2="{0:.1}" y2="{2}" stroke="#ddd"/><text x="{0:.1}" y="{3}" text-anchor="middle">{4:.3}</text>"##,
            sx(fx),
            MARGIN_T,
            MARGIN_T + ph,
            MARGIN_T + ph + 16.0,
            fx
        );
        let _ = writeln!(
            out,
            r##"<line x1="{1}" y1="{0:.1}" x2="{2}" y2="{0:.1}" stroke="#ddd"/><text x="{3}" y="{0:.1}" text-anchor="end" dominant-baseline="middle">{4:.3e}</text>"##,
            sy(fy),
            MARGIN_L,
            MARGIN_L + pw,
            MARGIN_L - 6.0,
            fy
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );

    for (k, s) in series.iter().enumerate() {
        let n = s.x.len().min(s.y.len());
        let stride = n.div_ceil(MAX_POINTS).max(1);
        let mut path = String::new();
        let mut pen_down = false;
        for i in (0..n).step_by(stride) {
            let (x, y) = (s.x[i], s.y[i]);
            if !(x.is_finite() && y.is_finite()) {
                pen_down = false;
                continue;
            }
            let _ = write!(path, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, sx(x), sy(y));
            pen_down = true;
        }
        if !path.is_empty() {
            let _ = writeln!(
                out,
                r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.3"/>"#,
                path.trim_end(),
                s.color
            );
        }
        let ly = MARGIN_T + 14.0 + 16.0 * k as f64;
        let lx = MARGIN_L + pw - 150.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"/><text x="{}" y="{ly}" dominant-baseline="middle">{}</text>"#,
            lx + 20.0,
            s.color,
            lx + 26.0,
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_paths_and_labels() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let svg = line_chart("t < 1", "time", &[Series { label: "y", x: &x, y: &y, color: "red" }]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("<path d=\"M"));
        assert!(svg.contains("t &lt; 1"));
    }

    #[test]
    fn nan_breaks_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.0, f64::NAN, 1.0, 2.0];
        let svg = line_chart("", "", &[Series { label: "a", x: &x, y: &y, color: "blue" }]);
        assert_eq!(svg.matches('M').count() - svg.matches("Mismatch").count(), 2);
    }

    #[test]
    fn all_nan_series_is_skipped() {
        let x = [0.0, 1.0];
        let y = [f64::NAN, f64::NAN];
        let svg = line_chart("", "", &[Series { label: "a", x: &x, y: &y, color: "blue" }]);
        assert!(!svg.contains("<path"));
    }
}
