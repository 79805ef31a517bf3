//! Minimal SVG scatter plots with an optional fitted line.

use std::fmt::Write;

#[derive(Clone, Debug, Default)]
pub struct Scatter {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub points: Vec<(f64, f64)>,
    /// `(slope, intercept)` of a line drawn over the data range.
    pub line: Option<(f64, f64)>,
}

const W: f64 = 640.0;
const H: f64 = 480.0;
const M: f64 = 60.0;

impl Scatter {
    pub fn to_svg(&self) -> String {
        let pts: Vec<(f64, f64)> = self.points.iter().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
        let (mut x0, mut x1, mut y0, mut y1) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |(a, b, c, d), &(x, y)| {
            (a.min(x), b.max(x), c.min(y), d.max(y))
        });
        if pts.is_empty() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if let Some((s, i)) = self.line {
            y0 = y0.min(s * x0 + i).min(s * x1 + i);
            y1 = y1.max(s * x0 + i).max(s * x1 + i);
        }
        let pad = |a: f64, b: f64| if b > a { (a - 0.05 * (b - a), b + 0.05 * (b - a)) } else { (a - 0.5, b + 0.5) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        let sx = |x: f64| M + (x - x0) / (x1 - x0) * (W - 2.0 * M);
        let sy = |y: f64| H - M - (y - y0) / (y1 - y0) * (H - 2.0 * M);
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(s, r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black"/>"#, W - 2.0 * M, H - 2.0 * M);
        let _ = writeln!(s, r#"<text x="{}" y="30" text-anchor="middle" font-size="16">{}</text>"#, W / 2.0, escape(&self.title));
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, H - 15.0, escape(&self.x_label));
        let _ = writeln!(s, r#"<text x="18" y="{}" text-anchor="middle" font-size="13" transform="rotate(-90 18 {})">{}</text>"#, H / 2.0, H / 2.0, escape(&self.y_label));
        for (v, p) in [(x0, sx(x0)), (x1, sx(x1))] {
            let _ = writeln!(s, r#"<text x="{p:.1}" y="{}" text-anchor="middle" font-size="11">{v:.3}</text>"#, H - M + 16.0);
        }
        for (v, p) in [(y0, sy(y0)), (y1, sy(y1))] {
            let _ = writeln!(s, r#"<text x="{}" y="{p:.1}" text-anchor="end" font-size="11">{v:.3}</text>"#, M - 4.0);
        }
        for &(x, y) in &pts {
            let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue"/>"#, sx(x), sy(y));
        }
        if let Some((k, i)) = self.line {
            let _ = writeln!(s, r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="crimson" stroke-width="1.5"/>"#, sx(x0), sy(k * x0 + i), sx(x1), sy(k * x1 + i));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svg_has_points_and_line() {
        let p = Scatter { title: "a < b".into(), points: vec![(0.0, 0.0), (1.0, 2.0)], line: Some((2.0, 0.0)), ..Default::default() };
        let s = p.to_svg();
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<circle").count(), 2);
        assert!(s.contains("<line") && s.contains("a &lt; b"));
    }
}
