//! Static SVG 1.1 line plots. Output depends only on the data.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;

pub struct LinePlot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
    /// Plot `log10 y`; non-positive values are dropped.
    pub log_y: bool,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn range(v: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo <= 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

impl LinePlot<'_> {
    pub fn render(&self) -> String {
        let pts: Vec<(f64, f64)> = self
            .x
            .iter()
            .zip(self.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite() && (!self.log_y || **y > 0.0))
            .map(|(&x, &y)| (x, if self.log_y { y.log10() } else { y }))
            .collect();
        let (x0, x1) = range(pts.iter().map(|p| p.0));
        let (y0, y1) = range(pts.iter().map(|p| p.1));
        let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
        let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

        let mut s = String::new();
        let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="15">{}</text>"#,
            W / 2.0,
            escape(self.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
            W - 2.0 * PAD,
            H - 2.0 * PAD
        );
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{}</text>"#,
                sx(xv),
                H - PAD + 16.0,
                tick(xv)
            );
            let label = if self.log_y { format!("1e{}", tick(yv)) } else { tick(yv) };
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end" font-family="sans-serif" font-size="11">{label}</text>"#,
                PAD - 6.0,
                sy(yv) + 4.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
            W / 2.0,
            H - 12.0,
            escape(self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(self.y_label)
        );
        if !pts.is_empty() {
            s.push_str(r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points=""#);
            for (i, (x, y)) in thin(&pts).iter().enumerate() {
                if i > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{:.2},{:.2}", sx(*x), sy(*y));
            }
            s.push_str("\"/>\n");
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// At most ~4000 vertices; keeps the first and last point.
fn thin(pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let stride = pts.len().div_ceil(4000).max(1);
    let mut out: Vec<(f64, f64)> = pts.iter().step_by(stride).copied().collect();
    if (pts.len() - 1) % stride != 0 {
        out.push(pts[pts.len() - 1]);
    }
    out
}
