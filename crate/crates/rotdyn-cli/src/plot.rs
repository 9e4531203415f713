//! Deterministic SVG rendering of result records. Every number is printed
//! with a fixed precision, so equal records give byte-identical files.

use std::fmt::Write as _;

use rotdyn::branches::TheoremCOutcome;
use rotdyn::invsets::{GraphCurve, RegionRecord};
use rotdyn::rotset::RotationSetEstimate;

use crate::record::{Outcome, ResultRecord};

const W: f64 = 720.0;
const H: f64 = 480.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Svg {
    body: String,
}

impl Svg {
    fn new(title: &str) -> Self {
        let mut body = String::new();
        let _ = writeln!(
            body,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(body, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            body,
            r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
            W / 2.0,
            esc(title)
        );
        Svg { body }
    }

    fn line(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, color: &str, width: f64) {
        let _ = writeln!(
            self.body,
            r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y1:.2}" stroke="{color}" stroke-width="{width:.1}"/>"#
        );
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, color: &str, opacity: f64) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{color}" fill-opacity="{opacity:.2}"/>"#
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}">{}</text>"#,
            esc(s)
        );
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str) {
        let mut p = String::new();
        for (x, y) in pts {
            let _ = write!(p, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            p.trim_end()
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, color: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r:.1}" fill="{color}"/>"#
        );
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Affine map from data `[lo, hi]` onto pixels `[a, b]`.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, a: f64, b: f64) -> Self {
        let (lo, hi) = if hi - lo > 1e-12 {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        };
        Axis { lo, hi, a, b }
    }

    fn px(&self, v: f64) -> f64 {
        self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }
}

fn frame(svg: &mut Svg, xa: Axis, ya: Axis, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (MARGIN, W - MARGIN / 2.0, MARGIN, H - MARGIN);
    svg.line(l, b, r, b, "black", 1.0);
    svg.line(l, t, l, b, "black", 1.0);
    for k in 0..=4 {
        let v = xa.lo + (xa.hi - xa.lo) * k as f64 / 4.0;
        let x = xa.px(v);
        svg.line(x, b, x, b + 4.0, "black", 1.0);
        svg.text(x, b + 18.0, "middle", &format!("{v:.3}"));
        let w = ya.lo + (ya.hi - ya.lo) * k as f64 / 4.0;
        let y = ya.px(w);
        svg.line(l - 4.0, y, l, y, "black", 1.0);
        svg.text(l - 6.0, y + 4.0, "end", &format!("{w:.2}"));
    }
    svg.text((l + r) / 2.0, H - 12.0, "middle", xlabel);
    svg.text(14.0, (t + b) / 2.0, "start", ylabel);
}

/// Annotated card for an estimate without samples.
pub fn placard(title: &str, message: &str) -> String {
    let mut svg = Svg::new(title);
    svg.rect(W * 0.2, H * 0.35, W * 0.6, H * 0.3, "#eeeeee", 1.0);
    svg.text(W / 2.0, H / 2.0 + 5.0, "middle", message);
    svg.finish()
}

/// One row per schedule level, with the level's intervals as bars.
pub fn staircase(title: &str, levels: &[RotationSetEstimate]) -> String {
    let finite: Vec<(f64, f64)> = levels
        .iter()
        .flat_map(|e| e.intervals.iter())
        .map(|iv| (iv.lo(), iv.hi()))
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .collect();
    if finite.is_empty() {
        return placard(title, "no returning orbits");
    }
    let lo = finite.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = finite.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.05 * (hi - lo).max(0.02);
    let xa = Axis::new(lo - pad, hi + pad, MARGIN, W - MARGIN / 2.0);
    let n = levels.len() as f64;
    let ya = Axis::new(-0.5, n - 0.5, H - MARGIN, MARGIN);
    let mut svg = Svg::new(title);
    frame(&mut svg, xa, ya, "rotation (turns)", "level");
    for (k, e) in levels.iter().enumerate() {
        let y = ya.px(k as f64);
        if e.intervals.is_empty() {
            svg.text(xa.px((lo + hi) / 2.0), y + 4.0, "middle", "no returning orbits");
            continue;
        }
        for iv in &e.intervals {
            let a = xa.px(iv.lo().max(xa.lo));
            let b = xa.px(iv.hi().min(xa.hi));
            svg.rect(a, y - 6.0, (b - a).max(2.0), 12.0, PALETTE[0], 0.85);
        }
    }
    svg.finish()
}

struct Layer<'a> {
    region: &'a RegionRecord,
    color: &'static str,
}

/// Occupied cells of one or more regions, overlaid with curves and points.
fn raster(title: &str, layers: &[Layer], curves: &[GraphCurve], points: &[(f64, f64)]) -> String {
    if layers.is_empty() {
        return placard(title, "no region");
    }
    let x0 = layers.iter().map(|l| l.region.grid.x0).fold(f64::INFINITY, f64::min);
    let x1 = layers
        .iter()
        .map(|l| l.region.grid.x1)
        .fold(f64::NEG_INFINITY, f64::max);
    let y0 = layers.iter().map(|l| l.region.grid.y0).fold(f64::INFINITY, f64::min);
    let y1 = layers
        .iter()
        .map(|l| l.region.grid.y1)
        .fold(f64::NEG_INFINITY, f64::max);
    let xa = Axis::new(x0, x1, MARGIN, W - MARGIN / 2.0);
    let ya = Axis::new(y0, y1, H - MARGIN, MARGIN);
    let mut svg = Svg::new(title);
    frame(&mut svg, xa, ya, "x (turns, cover)", "y");
    for layer in layers {
        let g = layer.region.grid;
        let (dx, dy) = ((g.x1 - g.x0) / g.nx as f64, (g.y1 - g.y0) / g.ny as f64);
        for &[start, len] in &layer.region.runs {
            // split runs at row boundaries
            let mut idx = start as usize;
            let end = start as usize + len as usize;
            while idx < end {
                let (i, j) = (idx % g.nx, idx / g.nx);
                let stop = end.min((j + 1) * g.nx);
                let i1 = i + (stop - idx);
                let (ax, bx) = (xa.px(g.x0 + i as f64 * dx), xa.px(g.x0 + i1 as f64 * dx));
                let (ay, by) = (ya.px(g.y0 + (j + 1) as f64 * dy), ya.px(g.y0 + j as f64 * dy));
                svg.rect(ax, ay, bx - ax, by - ay, layer.color, 0.6);
                idx = stop;
            }
        }
    }
    for (c, curve) in curves.iter().enumerate() {
        let k0 = x0.floor() as i64;
        let k1 = x1.ceil() as i64;
        let mut pts = Vec::new();
        for k in k0 * 64..=k1 * 64 {
            let x = k as f64 / 64.0;
            if x < x0 || x > x1 {
                continue;
            }
            pts.push((xa.px(x), ya.px(curve.eval(x))));
        }
        svg.polyline(&pts, if c % 2 == 0 { "black" } else { "#555555" });
    }
    for &(x, y) in points {
        svg.circle(xa.px(x), ya.px(y), 4.0, "#ff7f0e");
    }
    svg.finish()
}

/// Displacement of the witness orbit against the iterate, forward to the
/// right of 0 and backward to the left.
fn trace(title: &str, forward: &[(u64, f64)], backward: &[(u64, f64)]) -> String {
    let pts: Vec<(f64, f64)> = backward
        .iter()
        .rev()
        .map(|&(n, d)| (-(n as f64), d))
        .chain(forward.iter().map(|&(n, d)| (n as f64, d)))
        .collect();
    if pts.is_empty() {
        return placard(title, "no trace");
    }
    let nlo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let nhi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let dlo = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let dhi = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let xa = Axis::new(nlo, nhi, MARGIN, W - MARGIN / 2.0);
    let ya = Axis::new(dlo, dhi, H - MARGIN, MARGIN);
    let mut svg = Svg::new(title);
    frame(&mut svg, xa, ya, "iterate n", "p1 displacement");
    let px: Vec<(f64, f64)> = pts.iter().map(|&(n, d)| (xa.px(n), ya.px(d))).collect();
    svg.polyline(&px, PALETTE[1]);
    svg.finish()
}

/// All figures for a record, as `(file name, svg)` pairs.
pub fn render(record: &ResultRecord) -> Vec<(String, String)> {
    let name = &record.map.name;
    let op = record.config.operation.id();
    let mut out = Vec::new();
    match &record.outcome {
        Outcome::Empty { .. } => out.push((
            format!("{op}-staircase.svg"),
            placard(&format!("{op}: {name}"), "no returning orbits"),
        )),
        Outcome::Theta(t) => out.push((
            "theta-raster.svg".into(),
            raster(
                &format!("maximal invariant set: {name}"),
                &[Layer {
                    region: &t.region,
                    color: PALETTE[0],
                }],
                &[],
                &[],
            ),
        )),
        Outcome::Branches(b) => out.push((
            "branches-raster.svg".into(),
            raster(
                &format!("{:?} set and branch: {name}", b.side),
                &[
                    Layer {
                        region: &b.limit,
                        color: "#aaaaaa",
                    },
                    Layer {
                        region: &b.component,
                        color: PALETTE[0],
                    },
                ],
                &b.curves,
                &[(b.branch.base.x, b.branch.base.y)],
            ),
        )),
        Outcome::TheoremC(TheoremCOutcome::Certificate(c)) => {
            out.push((
                "theorem-c-regions.svg".into(),
                raster(
                    &format!("branches and witness (n = {}): {name}", c.n),
                    &[
                        Layer {
                            region: &c.unstable_region,
                            color: PALETTE[0],
                        },
                        Layer {
                            region: &c.stable_region,
                            color: PALETTE[1],
                        },
                    ],
                    &c.curves,
                    &[(c.pre_witness.x, c.pre_witness.y), (c.witness.x, c.witness.y)],
                ),
            ));
            out.push((
                "theorem-c-trace.svg".into(),
                trace(&format!("witness orbit: {name}"), &c.forward_trace, &c.backward_trace),
            ));
        }
        Outcome::TheoremC(TheoremCOutcome::Inconclusive(i)) => out.push((
            "theorem-c-placard.svg".into(),
            placard(&format!("inconclusive at {}", i.stage), &i.reason),
        )),
        other => out.push((
            format!("{op}-staircase.svg"),
            staircase(&format!("{op}: {name}"), &other.levels()),
        )),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rotdyn::rotset::ExtendedInterval;

    #[test]
    fn empty_estimate_is_a_placard() {
        let e = RotationSetEstimate::from_intervals(Vec::new(), 0.01);
        let svg = staircase("t", &[e]);
        assert!(svg.contains("no returning orbits"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn staircase_is_deterministic() {
        let a = RotationSetEstimate::from_intervals(vec![ExtendedInterval::new(-0.1, 0.2)], 0.01);
        let b = RotationSetEstimate::from_intervals(vec![ExtendedInterval::new(-0.05, 0.15)], 0.01);
        let s1 = staircase("t", &[a.clone(), b.clone()]);
        assert_eq!(s1, staircase("t", &[a, b]));
        assert_eq!(s1.matches("<rect").count(), 3);
    }
}
