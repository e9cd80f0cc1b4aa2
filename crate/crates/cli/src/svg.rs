//! Static, self-contained SVG plots: polylines in data coordinates, with
//! optional start/end markers and the base station drawn at the origin.

use std::fmt::Write;

pub const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub dashed: bool,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, color: &'static str) -> Self {
        Self { label: label.into(), points, color, dashed: false }
    }

    pub fn dashed(mut self) -> Self {
        self.dashed = true;
        self
    }
}

pub struct Plot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Planar trajectory view: equal axis scales, endpoint markers, base
    /// station at the origin.
    pub planar: bool,
    pub extra_points: Vec<(String, (f64, f64))>,
}

impl Plot {
    pub fn planar(title: impl Into<String>) -> Self {
        Self { title: title.into(), x_label: "x".into(), y_label: "y".into(), series: Vec::new(), planar: true, extra_points: Vec::new() }
    }

    pub fn chart(title: impl Into<String>, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            planar: false,
            extra_points: Vec::new(),
        }
    }

    pub fn push(&mut self, s: Series) -> &mut Self {
        self.series.push(s);
        self
    }

    pub fn render(&self) -> String {
        const W: f64 = 640.0;
        const H: f64 = 520.0;
        const M: f64 = 60.0;
        let finite = |p: &&(f64, f64)| p.0.is_finite() && p.1.is_finite();
        let mut pts: Vec<(f64, f64)> = self.series.iter().flat_map(|s| s.points.iter().filter(finite).copied()).collect();
        pts.extend(self.extra_points.iter().map(|(_, p)| *p));
        if self.planar {
            pts.push((0.0, 0.0));
        }
        let (mut x0, mut x1, mut y0, mut y1) =
            pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY), |(a, b, c, d), (x, y)| {
                (a.min(*x), b.max(*x), c.min(*y), d.max(*y))
            });
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
        }
        let pad = |lo: &mut f64, hi: &mut f64| {
            let span = (*hi - *lo).max(1e-9);
            *lo -= 0.05 * span;
            *hi += 0.05 * span;
        };
        pad(&mut x0, &mut x1);
        pad(&mut y0, &mut y1);
        let (pw, ph) = (W - 2.0 * M, H - 2.0 * M);
        let (mut sx, mut sy) = (pw / (x1 - x0), ph / (y1 - y0));
        if self.planar {
            let s = sx.min(sy);
            // Center the shorter axis.
            let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
            x0 = cx - 0.5 * pw / s;
            y0 = cy - 0.5 * ph / s;
            x1 = cx + 0.5 * pw / s;
            y1 = cy + 0.5 * ph / s;
            sx = s;
            sy = s;
        }
        let map = |(x, y): (f64, f64)| (M + (x - x0) * sx, H - M - (y - y0) * sy);

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, escape(&self.title));
        let _ = writeln!(out, r##"<rect x="{M}" y="{M}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>"##);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let (px, _) = map((xv, y0));
            let (_, py) = map((x0, yv));
            let _ = writeln!(out, r##"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="#ddd"/>"##, M, H - M);
            let _ = writeln!(out, r##"<line x1="{}" y1="{py:.2}" x2="{}" y2="{py:.2}" stroke="#ddd"/>"##, M, W - M);
            let _ = writeln!(out, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, H - M + 16.0, tick(xv));
            let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, M - 6.0, py + 4.0, tick(yv));
        }
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 18.0, escape(&self.x_label));
        let _ = writeln!(
            out,
            r#"<text x="18" y="{}" text-anchor="middle" transform="rotate(-90 18 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(&self.y_label)
        );

        for s in &self.series {
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(finite)
                .map(|p| {
                    let (x, y) = map(*p);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            if pts.is_empty() {
                continue;
            }
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let _ = writeln!(out, r#"<polyline fill="none" stroke="{}" stroke-width="1.8"{dash} points="{}"/>"#, s.color, pts.join(" "));
            if self.planar {
                let mut ends = s.points.iter().filter(finite);
                if let (Some(a), Some(b)) = (ends.clone().next(), ends.next_back()) {
                    let (ax, ay) = map(*a);
                    let (bx, by) = map(*b);
                    let _ = writeln!(out, r#"<circle cx="{ax:.2}" cy="{ay:.2}" r="4" fill="{}"/>"#, s.color);
                    let _ = writeln!(out, r#"<rect x="{:.2}" y="{:.2}" width="8" height="8" fill="{}"/>"#, bx - 4.0, by - 4.0, s.color);
                }
            }
        }
        for (label, p) in &self.extra_points {
            let (x, y) = map(*p);
            let _ = writeln!(out, r#"<path d="M{:.2},{:.2} l10,10 m0,-10 l-10,10" stroke="black" stroke-width="2"/>"#, x - 5.0, y - 5.0);
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 8.0, y - 6.0, escape(label));
        }
        if self.planar {
            let (x, y) = map((0.0, 0.0));
            let _ = writeln!(
                out,
                r#"<path d="M{x:.2},{:.2} L{:.2},{:.2} L{:.2},{:.2} Z" fill="black"/>"#,
                y - 7.0,
                x - 6.0,
                y + 5.0,
                x + 6.0,
                y + 5.0
            );
            let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">base station</text>"#, x + 9.0, y + 4.0);
        }

        let mut ly = M + 16.0;
        for s in &self.series {
            let dash = if s.dashed { r#" stroke-dasharray="6 4""# } else { "" };
            let lx = W - M - 150.0;
            let _ =
                writeln!(out, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/>"#, lx + 24.0, s.color);
            let _ = writeln!(out, r#"<text x="{}" y="{}">{}</text>"#, lx + 30.0, ly + 4.0, escape(&s.label));
            ly += 18.0;
        }
        out.push_str("</svg>\n");
        out
    }
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
