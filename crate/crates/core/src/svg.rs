//! Minimal SVG writers for scatter plots and level-set bands.

use std::fmt::Write;

use crate::quartic::LevelSetGrid;

/// Nine viridis stops, interpolated linearly.
const RAMP: [(u8, u8, u8); 9] = [
    (68, 1, 84),
    (71, 44, 122),
    (59, 81, 139),
    (44, 113, 142),
    (33, 144, 141),
    (39, 173, 129),
    (92, 200, 99),
    (170, 220, 50),
    (253, 231, 37),
];

pub fn color(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (RAMP.len() - 1) as f64;
    let k = (pos.floor() as usize).min(RAMP.len() - 2);
    let f = pos - k as f64;
    let mix = |a: u8, b: u8| (a as f64 + f * (b as f64 - a as f64)).round() as u8;
    let (a, b) = (RAMP[k], RAMP[k + 1]);
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;

struct Frame {
    lo: [f64; 2],
    hi: [f64; 2],
}

impl Frame {
    fn fit(points: impl Iterator<Item = [f64; 2]>) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        for k in 0..2 {
            if !(hi[k] > lo[k]) {
                let c = if lo[k].is_finite() { lo[k] } else { 0.0 };
                lo[k] = c - 1.0;
                hi[k] = c + 1.0;
            }
        }
        Self { lo, hi }
    }

    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        let w = SIZE - 2.0 * MARGIN;
        let x = MARGIN + (p[0] - self.lo[0]) / (self.hi[0] - self.lo[0]) * w;
        let y = SIZE - MARGIN - (p[1] - self.lo[1]) / (self.hi[1] - self.lo[1]) * w;
        (x, y)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{MARGIN}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        escape(title)
    );
}

fn footer(out: &mut String, vmin: f64, vmax: f64) {
    let y = SIZE - 12.0;
    let _ = write!(
        out,
        "<text x=\"{MARGIN}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\">color: {vmin:.3} (dark) to {vmax:.3} (light)</text>\n</svg>\n"
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn value_range(values: &[f64]) -> (f64, f64) {
    let lo = values.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if lo.is_finite() && hi > lo {
        (lo, hi)
    } else if lo.is_finite() {
        (lo - 1.0, lo + 1.0)
    } else {
        (0.0, 1.0)
    }
}

/// Points placed at their feature coordinates and colored by `values`.
pub fn scatter(points: &[[f64; 2]], values: &[f64], title: &str) -> String {
    let frame = Frame::fit(points.iter().copied());
    let (vmin, vmax) = value_range(values);
    let mut out = String::new();
    header(&mut out, title);
    for (p, v) in points.iter().zip(values) {
        let (x, y) = frame.px(*p);
        let _ = writeln!(
            out,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.8\"/>",
            color((v - vmin) / (vmax - vmin))
        );
    }
    footer(&mut out, vmin, vmax);
    out
}

/// Grid cells colored by the selected minimizer; nodes with several global
/// minimizers are marked with a black dot.
pub fn bands(grid: &LevelSetGrid, title: &str) -> String {
    let r = &grid.region;
    let frame = Frame { lo: [r.x1_min, r.x2_min], hi: [r.x1_max, r.x2_max] };
    let lambdas: Vec<f64> = grid.nodes.iter().map(|n| n.lambda).collect();
    let (vmin, vmax) = value_range(&lambdas);
    let cell = (SIZE - 2.0 * MARGIN) / (grid.resolution - 1).max(1) as f64;
    let mut out = String::new();
    header(&mut out, title);
    for n in &grid.nodes {
        let (x, y) = frame.px(n.x);
        let _ = writeln!(
            out,
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
            x - cell / 2.0,
            y - cell / 2.0,
            cell,
            cell,
            color((n.lambda - vmin) / (vmax - vmin))
        );
    }
    for n in grid.nodes.iter().filter(|n| n.count >= 2) {
        let (x, y) = frame.px(n.x);
        let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"1.5\" fill=\"black\"/>");
    }
    footer(&mut out, vmin, vmax);
    out
}
