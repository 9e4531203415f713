//! Parametric families of lifted annulus maps, plus combinators.
//!
//! Every constructor returns a [`LiftedAnnulusMap`] whose inverse is exact
//! or found by a bracketed root search on a monotone fiber map.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cover::{CoverPoint, LiftedAnnulusMap, MapMeta};

#[derive(Debug, Error, PartialEq)]
pub enum ZooError {
    #[error("profile {label} is not finite at {at}")]
    NonFinite { label: String, at: f64 },
    #[error("profile {label} is not strictly increasing near {at}")]
    NotMonotone { label: String, at: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("fixed point off the origin: displacement {min_displacement:.3e} at y = {at_y}")]
    FixedPoint { min_displacement: f64, at_y: f64 },
}

type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A real function of one variable with a declared domain and a sampled
/// range bound. Used for rotation profiles and radial maps alike.
#[derive(Clone)]
pub struct Alpha1D {
    f: Profile,
    domain: (f64, f64),
    bound: f64,
    label: String,
}

impl fmt::Debug for Alpha1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Alpha1D")
            .field("label", &self.label)
            .field("domain", &self.domain)
            .field("bound", &self.bound)
            .finish()
    }
}

const PROFILE_SAMPLES: usize = 8192;

impl Alpha1D {
    pub fn new(
        label: impl Into<String>,
        domain: (f64, f64),
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, ZooError> {
        let label = label.into();
        if !(domain.0 < domain.1) {
            return Err(ZooError::Precondition(format!("empty domain for {label}")));
        }
        let mut bound = 0.0f64;
        for k in 0..=PROFILE_SAMPLES {
            let y = domain.0 + (domain.1 - domain.0) * k as f64 / PROFILE_SAMPLES as f64;
            let v = f(y);
            if !v.is_finite() {
                return Err(ZooError::NonFinite { label, at: y });
            }
            bound = bound.max(v.abs());
        }
        Ok(Alpha1D {
            f: Arc::new(f),
            domain,
            bound,
            label,
        })
    }

    #[inline]
    pub fn eval(&self, y: f64) -> f64 {
        (self.f)(y)
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    /// Sampled `sup |α|` over the domain.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Dense-sampling check of strict monotonicity on the domain.
    pub fn check_strictly_increasing(&self) -> Result<(), ZooError> {
        let (a, b) = self.domain;
        let mut prev = self.eval(a);
        for k in 1..=PROFILE_SAMPLES {
            let y = a + (b - a) * k as f64 / PROFILE_SAMPLES as f64;
            let v = self.eval(y);
            if v <= prev {
                return Err(ZooError::NotMonotone {
                    label: self.label.clone(),
                    at: y,
                });
            }
            prev = v;
        }
        Ok(())
    }

    pub fn constant(c: f64) -> Self {
        Alpha1D::new(format!("const({c})"), (-50.0, 50.0), move |_| c).expect("finite constant")
    }

    /// `sin(e^y) / 2π`: the profile `sin(1/r)` in turns, read in the chart.
    pub fn sin_exp() -> Self {
        Alpha1D::new("sin(exp(y))/2pi", (-20.0, 30.0), |y| y.exp().sin() / TAU).expect("finite")
    }

    /// `1 / (1 + y²)`.
    pub fn lorentzian() -> Self {
        Alpha1D::new("1/(1+y^2)", (-50.0, 50.0), |y| 1.0 / (1.0 + y * y)).expect("finite")
    }
}

/// Solves `g(y) = target` for increasing `g`, starting from the bracket
/// `[lo, hi]` and widening it if the root lies outside. Illinois-style
/// regula falsi, falling back to bisection when the secant leaves the bracket.
fn solve_increasing(g: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut step = (hi - lo).max(1e-9);
    let mut flo = g(lo) - target;
    while flo > 0.0 {
        lo -= step;
        step *= 2.0;
        flo = g(lo) - target;
    }
    step = (hi - lo).max(1e-9);
    let mut fhi = g(hi) - target;
    while fhi < 0.0 {
        hi += step;
        step *= 2.0;
        fhi = g(hi) - target;
    }
    let tol = 4.0 * f64::EPSILON * (1.0 + target.abs());
    let mut side = 0i8;
    for _ in 0..200 {
        if flo == 0.0 {
            return lo;
        }
        if fhi == 0.0 {
            return hi;
        }
        let mut c = (lo * fhi - hi * flo) / (fhi - flo);
        if !(c > lo && c < hi) {
            c = 0.5 * (lo + hi);
            if !(c > lo && c < hi) {
                break;
            }
        }
        let fc = g(c) - target;
        if fc.abs() <= tol {
            return c;
        }
        if fc < 0.0 {
            lo = c;
            flo = fc;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = c;
            fhi = fc;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    if (g(lo) - target).abs() <= (g(hi) - target).abs() {
        lo
    } else {
        hi
    }
}

pub fn identity() -> LiftedAnnulusMap {
    LiftedAnnulusMap::new(MapMeta::new("identity"), (-50.0, 50.0), 0.0, |p| p, |p| p)
}

pub fn rigid_rotation(turns: f64) -> LiftedAnnulusMap {
    LiftedAnnulusMap::new(
        MapMeta::new("rigid-rotation").with("turns", turns),
        (-50.0, 50.0),
        turns.abs(),
        move |p| CoverPoint::new(p.x + turns, p.y),
        move |p| CoverPoint::new(p.x - turns, p.y),
    )
}

/// `(x, y) ↦ (x + y, y)`, certified on `|y| ≤ half_width`.
pub fn twist(half_width: f64) -> LiftedAnnulusMap {
    LiftedAnnulusMap::new(
        MapMeta::new("twist").with("half_width", half_width),
        (-half_width, half_width),
        half_width,
        |p| CoverPoint::new(p.x + p.y, p.y),
        |p| CoverPoint::new(p.x - p.y, p.y),
    )
}

/// `(x, y) ↦ (x + k·y, y)`, certified on `|y| ≤ half_width`.
pub fn shear(k: f64, half_width: f64) -> LiftedAnnulusMap {
    LiftedAnnulusMap::new(
        MapMeta::new("shear").with("k", k).with("half_width", half_width),
        (-half_width, half_width),
        k.abs() * half_width,
        move |p| CoverPoint::new(p.x + k * p.y, p.y),
        move |p| CoverPoint::new(p.x - k * p.y, p.y),
    )
}

/// `(x, y) ↦ (x, y + dy)`.
pub fn vertical_drift(dy: f64) -> LiftedAnnulusMap {
    LiftedAnnulusMap::new(
        MapMeta::new("drift").with("dy", dy),
        (-50.0, 50.0),
        0.0,
        move |p| CoverPoint::new(p.x, p.y + dy),
        move |p| CoverPoint::new(p.x, p.y - dy),
    )
}

/// The plane map `z ↦ s·e^{2πit}·z` read through the log-polar chart.
pub fn plane_linear(scale: f64, turns: f64) -> Result<LiftedAnnulusMap, ZooError> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(ZooError::Precondition(format!("scale must be positive, got {scale}")));
    }
    let dy = -scale.ln();
    Ok(LiftedAnnulusMap::new(
        MapMeta::new("plane-linear").with("scale", scale).with("turns", turns),
        (-50.0, 50.0),
        turns.abs(),
        move |p| CoverPoint::new(p.x + turns, p.y + dy),
        move |p| CoverPoint::new(p.x - turns, p.y - dy),
    ))
}

/// Fibred rotation `(x, y) ↦ (x + α(y), y)`.
pub fn fibred_rotation(alpha: Alpha1D) -> LiftedAnnulusMap {
    let bound = alpha.bound();
    let domain = alpha.domain();
    let meta = MapMeta::new(format!("fibred[{}]", alpha.label()));
    let a = alpha.clone();
    LiftedAnnulusMap::new(
        meta,
        domain,
        bound,
        move |p| CoverPoint::new(p.x + alpha.eval(p.y), p.y),
        move |p| CoverPoint::new(p.x - a.eval(p.y), p.y),
    )
}

/// `z̃ ↦ f̃^q(z̃) + (p, 0)`: the lift of `J^p ∗ I^q`.
pub fn rigid_rotation_isotopy_power(map: &LiftedAnnulusMap, p: i64, q: i64) -> Result<LiftedAnnulusMap, ZooError> {
    if q == 0 {
        return Err(ZooError::Precondition("q must be nonzero".into()));
    }
    let fwd = map.forward_fn();
    let inv = map.inverse_fn();
    let (f1, i1) = (fwd.clone(), inv.clone());
    let pf = p as f64;
    let forward = move |z: CoverPoint| {
        let mut w = z;
        for _ in 0..q.unsigned_abs() {
            w = if q > 0 { f1(w) } else { i1(w) };
        }
        CoverPoint::new(w.x + pf, w.y)
    };
    let inverse = move |z: CoverPoint| {
        let mut w = CoverPoint::new(z.x - pf, z.y);
        for _ in 0..q.unsigned_abs() {
            w = if q > 0 { inv(w) } else { fwd(w) };
        }
        w
    };
    let mut meta = map.meta().clone();
    meta.name = format!("power({},{p},{q})", meta.name);
    Ok(LiftedAnnulusMap::new(
        meta,
        map.band(),
        q.unsigned_abs() as f64 * map.horizontal_bound() + pf.abs(),
        forward,
        inverse,
    ))
}

/// Applies `maps[0]` first, then `maps[1]`, and so on.
pub fn compose(maps: &[LiftedAnnulusMap]) -> Result<LiftedAnnulusMap, ZooError> {
    if maps.is_empty() {
        return Err(ZooError::Precondition("compose needs at least one map".into()));
    }
    let fwds: Vec<_> = maps.iter().map(|m| m.forward_fn()).collect();
    let invs: Vec<_> = maps.iter().rev().map(|m| m.inverse_fn()).collect();
    let names: Vec<_> = maps.iter().map(|m| m.name().to_string()).collect();
    let bound = maps.iter().map(|m| m.horizontal_bound()).sum();
    Ok(LiftedAnnulusMap::new(
        MapMeta::new(format!("compose({})", names.join(","))),
        maps[0].band(),
        bound,
        move |p| fwds.iter().fold(p, |w, f| f(w)),
        move |p| invs.iter().fold(p, |w, f| f(w)),
    ))
}

/// `h ∘ f ∘ h⁻¹`.
pub fn conjugate(map: &LiftedAnnulusMap, by: &LiftedAnnulusMap) -> LiftedAnnulusMap {
    let (f, fi) = (map.forward_fn(), map.inverse_fn());
    let (h, hi) = (by.forward_fn(), by.inverse_fn());
    let (h2, hi2) = (h.clone(), hi.clone());
    LiftedAnnulusMap::new(
        MapMeta::new(format!("conjugate({},{})", map.name(), by.name())),
        map.band(),
        map.horizontal_bound() + 2.0 * by.horizontal_bound(),
        move |p| h(f(hi(p))),
        move |p| h2(fi(hi2(p))),
    )
}

/// Parameters of the self-similar plane map with three rotating circles
/// per scale. Angles are in turns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwiceReeb {
    /// Rotation on the boundary circles `|z| = 1` and `|z| = 3`.
    pub beta: f64,
    /// Rotation on the middle circle `|z| = 2`.
    pub alpha: f64,
    /// Radial stiffness in `(0, 1)`; 1 is the monotonicity limit.
    pub stiffness: f64,
}

impl Default for TwiceReeb {
    fn default() -> Self {
        TwiceReeb {
            beta: 0.1,
            alpha: -0.1,
            stiffness: 0.8,
        }
    }
}

/// Chart coordinate of the middle circle `|z| = 2` in `y = -log₃ r`.
pub fn twice_reeb_middle_level() -> f64 {
    -(2f64.ln() / 3f64.ln())
}

/// Piecewise-linear phase with `φ(y + 1) = φ(y) + 1`, sending the three
/// circles to `φ ∈ ½ℤ`.
fn reeb_phase(y: f64) -> f64 {
    let y2 = twice_reeb_middle_level();
    let k = y.floor();
    let t = y - k; // in [0, 1): t = 0 is |z| = 3^-k, t = 1 + y2 is the middle circle
    let tm = 1.0 + y2;
    let local = if t <= tm {
        0.5 * t / tm
    } else {
        0.5 + 0.5 * (t - tm) / (1.0 - tm)
    };
    k + local
}

fn reeb_phase_max_slope() -> f64 {
    let tm = 1.0 + twice_reeb_middle_level();
    0.5 / tm.min(1.0 - tm)
}

/// Minimum over `y` samples of the annulus displacement `|f(z) - z|`
/// (sup norm, angle taken mod 1) for an x-independent skew product.
fn min_skew_displacement(
    omega: &dyn Fn(f64) -> f64,
    radial: &dyn Fn(f64) -> f64,
    y0: f64,
    y1: f64,
    samples: usize,
) -> (f64, f64) {
    let mut best = (f64::INFINITY, y0);
    for k in 0..=samples {
        let y = y0 + (y1 - y0) * k as f64 / samples as f64;
        let w = omega(y);
        let dx = (w - w.round()).abs();
        let d = dx.max((radial(y) - y).abs());
        if d < best.0 {
            best = (d, y);
        }
    }
    best
}

/// The twice-Reeb plane map in the chart `y = -log₃ r`, where the
/// self-similarity `z ↦ z/3` becomes `y ↦ y + 1`.
///
/// On each scale the circles `|z| = 1, 2, 3` are fixed and rotate by
/// `β, α, β`; between them every point drifts towards the origin.
pub fn twice_reeb_plane(params: TwiceReeb) -> Result<LiftedAnnulusMap, ZooError> {
    let TwiceReeb { beta, alpha, stiffness } = params;
    if !(beta > 0.0) || !(alpha < 0.0 || alpha == beta) {
        return Err(ZooError::Precondition(format!(
            "need beta > 0 and alpha < 0 (or alpha = beta), got beta {beta}, alpha {alpha}"
        )));
    }
    if !(stiffness > 0.0 && stiffness < 1.0) {
        return Err(ZooError::Precondition(format!(
            "stiffness must lie in (0, 1), got {stiffness}"
        )));
    }
    let amp = stiffness / (TAU * reeb_phase_max_slope());
    let omega = move |y: f64| 0.5 * (beta + alpha) + 0.5 * (beta - alpha) * (TAU * reeb_phase(y)).cos();
    let radial = move |y: f64| y + amp * (TAU * reeb_phase(y)).sin().powi(2);
    let (min_d, at_y) = min_skew_displacement(&omega, &radial, -1.0, 0.0, 1 << 16);
    if min_d <= 1e-6 {
        return Err(ZooError::FixedPoint {
            min_displacement: min_d,
            at_y,
        });
    }
    let meta = MapMeta::new("twice-reeb")
        .with("beta", beta)
        .with("alpha", alpha)
        .with("stiffness", stiffness)
        .with("min_displacement", min_d);
    let bound = beta.abs().max(alpha.abs());
    Ok(LiftedAnnulusMap::new(
        meta,
        (-50.0, 50.0),
        bound,
        move |p| CoverPoint::new(p.x + omega(p.y), radial(p.y)),
        move |p| {
            let y = solve_increasing(radial, p.y, p.y - amp - 1e-12, p.y + 1e-12);
            CoverPoint::new(p.x - omega(y), y)
        },
    ))
}

/// Parameters of the annulus map rotating by `+1` near the S end and by
/// `-1` near the N end, with every orbit drifting from S to N.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoubleReeb {
    /// Beyond `|y| = plateau` the rotation is exactly `∓1`.
    pub plateau: f64,
    /// Minimum upward drift per iterate.
    pub drift_floor: f64,
    /// Extra drift in the middle region.
    pub drift_peak: f64,
    /// Width of the middle region.
    pub width: f64,
}

impl Default for DoubleReeb {
    fn default() -> Self {
        DoubleReeb {
            plateau: 3.0,
            drift_floor: 0.05,
            drift_peak: 0.2,
            width: 1.0,
        }
    }
}

pub fn open_annulus_double_reeb(params: DoubleReeb) -> Result<LiftedAnnulusMap, ZooError> {
    let DoubleReeb {
        plateau,
        drift_floor,
        drift_peak,
        width,
    } = params;
    if !(plateau > 0.0 && drift_floor > 0.0 && drift_peak >= 0.0 && width > 0.0) {
        return Err(ZooError::Precondition("double-reeb parameters must be positive".into()));
    }
    // d' is bounded by drift_peak * 0.77 / width
    if drift_peak * 0.77 / width >= 1.0 {
        return Err(ZooError::Precondition("drift profile breaks monotonicity".into()));
    }
    let omega = move |y: f64| {
        if y <= -plateau {
            1.0
        } else if y >= plateau {
            -1.0
        } else {
            -(0.5 * PI * y / plateau).sin()
        }
    };
    let radial = move |y: f64| {
        let s = 1.0 / (y / width).cosh();
        y + drift_floor + drift_peak * s * s
    };
    let (min_d, at_y) = min_skew_displacement(&omega, &radial, -10.0, 10.0, 1 << 16);
    if min_d <= 1e-6 {
        return Err(ZooError::FixedPoint {
            min_displacement: min_d,
            at_y,
        });
    }
    let meta = MapMeta::new("double-reeb")
        .with("plateau", plateau)
        .with("drift_floor", drift_floor)
        .with("drift_peak", drift_peak)
        .with("width", width);
    Ok(LiftedAnnulusMap::new(
        meta,
        (-50.0, 50.0),
        1.0,
        move |p| CoverPoint::new(p.x + omega(p.y), radial(p.y)),
        move |p| {
            let y = solve_increasing(
                radial,
                p.y,
                p.y - drift_floor - drift_peak - 1e-12,
                p.y - drift_floor + 1e-12,
            );
            CoverPoint::new(p.x - omega(y), y)
        },
    ))
}

/// Heights `y₂ < y_b < y₁ < y_a < y₀` of the three curves and the two
/// invariant circles of the heteroclinic skew family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Levels {
    pub y2: f64,
    pub yb: f64,
    pub y1: f64,
    pub ya: f64,
    pub y0: f64,
}

impl Default for Levels {
    fn default() -> Self {
        Levels {
            y2: -1.0,
            yb: -0.5,
            y1: 0.0,
            ya: 0.5,
            y0: 1.0,
        }
    }
}

impl Levels {
    fn ordered(&self) -> bool {
        self.y2 < self.yb && self.yb < self.y1 && self.y1 < self.ya && self.ya < self.y0
    }
}

/// `y + u(y) + ε sin 2πx` followed by `x ↦ x + ω(y')`, where `y'` is the new
/// height. Both factors are homeomorphisms whenever `y ↦ y + u(y)` is
/// increasing, so the inverse is explicit up to one monotone solve.
fn tilted_skew(
    meta: MapMeta,
    band: (f64, f64),
    bound: f64,
    omega: Profile,
    radial: Profile,
    radial_bracket: (f64, f64),
    tilt: f64,
) -> LiftedAnnulusMap {
    let (o1, r1) = (omega.clone(), radial.clone());
    LiftedAnnulusMap::new(
        meta,
        band,
        bound,
        move |p| {
            let y = r1(p.y) + tilt * (TAU * p.x).sin();
            CoverPoint::new(p.x + o1(y), y)
        },
        move |p| {
            let x = p.x - omega(p.y);
            let target = p.y - tilt * (TAU * x).sin();
            // radial(y) - y lies in radial_bracket
            let y = solve_increasing(
                |s| radial(s),
                target,
                target - radial_bracket.1 - 1e-12,
                target - radial_bracket.0 + 1e-12,
            );
            CoverPoint::new(x, y)
        },
    )
}

fn sampled_offset_range(radial: &Alpha1D) -> (f64, f64) {
    let (a, b) = radial.domain();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..=PROFILE_SAMPLES {
        let y = a + (b - a) * k as f64 / PROFILE_SAMPLES as f64;
        let d = radial.eval(y) - y;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (lo, hi)
}

/// General skew product `(x, y) ↦ (x + ω(m(y)), m(y))` for an increasing
/// radial map `m`.
pub fn skew_product(
    name: &str,
    band: (f64, f64),
    omega: Alpha1D,
    radial: Alpha1D,
) -> Result<LiftedAnnulusMap, ZooError> {
    radial.check_strictly_increasing()?;
    let offsets = sampled_offset_range(&radial);
    let om = omega.clone();
    let ra = radial.clone();
    Ok(tilted_skew(
        MapMeta::new(name),
        band,
        omega.bound(),
        Arc::new(move |y| om.eval(y)),
        Arc::new(move |y| ra.eval(y)),
        offsets,
        0.0,
    ))
}

/// Heteroclinic skew family: `(x, y) ↦ (x + ω(y'), y')` with
/// `y' = m(y) + ε sin 2πx`.
///
/// The radial map `m` must be increasing, fix exactly `y_a` and `y_b`, and
/// move every other height of `[y₂, y₀]` down. With `ε = 0` the circles at
/// `y_a` and `y_b` are invariant and rotate by `ω(y_a) > 0` and `ω(y_b) < 0`.
pub fn skew_heteroclinic(
    levels: Levels,
    omega: Alpha1D,
    radial: Alpha1D,
    tilt: f64,
) -> Result<LiftedAnnulusMap, ZooError> {
    if !levels.ordered() {
        return Err(ZooError::Precondition(format!("levels out of order: {levels:?}")));
    }
    if !(tilt >= 0.0 && tilt.is_finite()) {
        return Err(ZooError::Precondition(format!(
            "tilt must be finite and nonnegative, got {tilt}"
        )));
    }
    let (d0, d1) = radial.domain();
    if d0 > levels.y2 - 1.0 || d1 < levels.y0 + 1.0 {
        return Err(ZooError::Precondition(
            "radial domain must cover [y2 - 1, y0 + 1]".into(),
        ));
    }
    radial.check_strictly_increasing()?;
    for (name, y) in [("y_a", levels.ya), ("y_b", levels.yb)] {
        if (radial.eval(y) - y).abs() > 1e-12 {
            return Err(ZooError::Precondition(format!("radial does not fix {name} = {y}")));
        }
    }
    let n = 4096;
    for k in 0..=n {
        let y = levels.y2 + (levels.y0 - levels.y2) * k as f64 / n as f64;
        if (y - levels.ya).abs() < 1e-6 || (y - levels.yb).abs() < 1e-6 {
            continue;
        }
        if radial.eval(y) >= y {
            return Err(ZooError::Precondition(format!("radial(y) >= y at y = {y}")));
        }
    }
    if !(omega.eval(levels.ya) > 0.0 && omega.eval(levels.yb) < 0.0) {
        return Err(ZooError::Precondition("need omega(y_a) > 0 and omega(y_b) < 0".into()));
    }
    let mut bound = 0.0f64;
    for k in 0..=n {
        let y = levels.y2 + (levels.y0 - levels.y2) * k as f64 / n as f64;
        bound = bound.max(omega.eval(y).abs());
    }
    let offsets = sampled_offset_range(&radial);
    let meta = MapMeta::new("skew-het")
        .with("y2", levels.y2)
        .with("yb", levels.yb)
        .with("y1", levels.y1)
        .with("ya", levels.ya)
        .with("y0", levels.y0)
        .with("omega_a", omega.eval(levels.ya))
        .with("omega_b", omega.eval(levels.yb))
        .with("tilt", tilt);
    let om = omega.clone();
    let ra = radial.clone();
    Ok(tilted_skew(
        meta,
        (levels.y2, levels.y0),
        bound,
        Arc::new(move |y| om.eval(y)),
        Arc::new(move |y| ra.eval(y)),
        offsets,
        tilt,
    ))
}

/// Affine rotation profile through `(y_a, ω_a)` and `(y_b, ω_b)`.
pub fn linear_omega(levels: Levels, omega_a: f64, omega_b: f64) -> Alpha1D {
    let slope = (omega_a - omega_b) / (levels.ya - levels.yb);
    let ya = levels.ya;
    Alpha1D::new(
        format!("linear({omega_b},{omega_a})"),
        (levels.y2 - 10.0, levels.y0 + 10.0),
        move |y| omega_a + slope * (y - ya),
    )
    .expect("finite")
}

/// `m(y) = y - κ q/(1 + q)` with `q = ((y - y_a)(y - y_b)/s²)²`: double
/// zeros at the two circles, so both are semi-stable and every other height
/// moves down.
pub fn heteroclinic_radial(levels: Levels, kappa: f64, scale: f64) -> Result<Alpha1D, ZooError> {
    let (ya, yb) = (levels.ya, levels.yb);
    let s2 = scale * scale;
    Alpha1D::new(
        format!("heteroclinic-radial({kappa},{scale})"),
        (levels.y2 - 10.0, levels.y0 + 10.0),
        move |y| {
            let t = (y - ya) * (y - yb) / s2;
            let q = t * t;
            y - kappa * q / (1.0 + q)
        },
    )
}

/// Parameters of the reference heteroclinic map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewHet {
    pub levels: Levels,
    pub omega_a: f64,
    pub omega_b: f64,
    pub kappa: f64,
    pub scale: f64,
    pub tilt: f64,
}

impl Default for SkewHet {
    fn default() -> Self {
        SkewHet {
            levels: Levels::default(),
            omega_a: 0.3,
            omega_b: -0.2,
            kappa: 0.1,
            scale: 0.5,
            tilt: 0.0,
        }
    }
}

pub fn skew_heteroclinic_reference(params: SkewHet) -> Result<LiftedAnnulusMap, ZooError> {
    let omega = linear_omega(params.levels, params.omega_a, params.omega_b);
    let radial = heteroclinic_radial(params.levels, params.kappa, params.scale)?;
    skew_heteroclinic(params.levels, omega, radial, params.tilt)
}

/// Parameters of the tilted variant used for the branch machinery.
///
/// The curves sit at `y = 1, 0, -1`. The vertical factor is
/// `y ↦ y - a + b sin²(πy) + ε sin 2πx` and the rotation is `+1` above
/// `y = τ`, `-1` below `y = -τ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TiltedHet {
    pub tilt: f64,
    pub drift: f64,
    pub hump: f64,
    pub transition: f64,
}

impl Default for TiltedHet {
    fn default() -> Self {
        TiltedHet {
            tilt: 1.0,
            drift: 1.05,
            hump: 0.28,
            transition: 0.1,
        }
    }
}

impl TiltedHet {
    pub fn levels(&self) -> (f64, f64, f64) {
        (1.0, 0.0, -1.0)
    }
}

pub fn tilted_heteroclinic(params: TiltedHet) -> Result<LiftedAnnulusMap, ZooError> {
    let TiltedHet {
        tilt,
        drift,
        hump,
        transition,
    } = params;
    if !(tilt >= 0.0 && drift > 0.0 && hump >= 0.0 && transition > 0.0 && transition < 0.5) {
        return Err(ZooError::Precondition(format!("invalid tilted parameters {params:?}")));
    }
    if hump * PI >= 1.0 {
        return Err(ZooError::Precondition(format!(
            "hump {hump} breaks monotonicity of the vertical factor"
        )));
    }
    let omega: Profile = Arc::new(move |y: f64| {
        if y >= transition {
            1.0
        } else if y <= -transition {
            -1.0
        } else {
            (0.5 * PI * y / transition).sin()
        }
    });
    let radial: Profile = Arc::new(move |y: f64| y - drift + hump * (PI * y).sin().powi(2));
    let meta = MapMeta::new("skew-het-tilted")
        .with("tilt", tilt)
        .with("drift", drift)
        .with("hump", hump)
        .with("transition", transition);
    Ok(tilted_skew(
        meta,
        (-1.0, 1.0),
        1.0,
        omega,
        radial,
        (-drift, hump - drift),
        tilt,
    ))
}

/// Twist with radial motion away from (`rate > 0`) or towards (`rate < 0`)
/// the invariant band `|y| ≤ half_width`.
pub fn flanked_twist(half_width: f64, rate: f64) -> Result<LiftedAnnulusMap, ZooError> {
    if !(half_width >= 0.0 && rate > -1.0 && rate != 0.0) {
        return Err(ZooError::Precondition(format!(
            "need rate in (-1, 0) or (0, inf), got {rate}"
        )));
    }
    let b = half_width;
    let fwd = move |y: f64| {
        if y > b {
            b + (y - b) * (1.0 + rate)
        } else if y < -b {
            -b + (y + b) * (1.0 + rate)
        } else {
            y
        }
    };
    let inv = move |y: f64| {
        if y > b {
            b + (y - b) / (1.0 + rate)
        } else if y < -b {
            -b + (y + b) / (1.0 + rate)
        } else {
            y
        }
    };
    Ok(LiftedAnnulusMap::new(
        MapMeta::new("flanked-twist").with("half_width", b).with("rate", rate),
        (-3.0 * b.max(1.0), 3.0 * b.max(1.0)),
        3.0 * b.max(1.0),
        move |p| CoverPoint::new(p.x + p.y, fwd(p.y)),
        move |p| {
            let y = inv(p.y);
            CoverPoint::new(p.x - y, y)
        },
    ))
}

/// Named rotation profiles for fibred rotations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case")]
pub enum ProfileSpec {
    Constant { c: f64 },
    SinExp,
    Lorentzian,
}

impl ProfileSpec {
    pub fn build(&self) -> Alpha1D {
        match self {
            ProfileSpec::Constant { c } => Alpha1D::constant(*c),
            ProfileSpec::SinExp => Alpha1D::sin_exp(),
            ProfileSpec::Lorentzian => Alpha1D::lorentzian(),
        }
    }
}

/// Serializable description of a map: a family tag plus parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MapSpec {
    Identity,
    RigidRotation { turns: f64 },
    Twist { half_width: f64 },
    Shear { k: f64, half_width: f64 },
    Drift { dy: f64 },
    PlaneLinear { scale: f64, turns: f64 },
    FibredRotation { profile: ProfileSpec },
    TwiceReeb(TwiceReeb),
    DoubleReeb(DoubleReeb),
    SkewHet(SkewHet),
    SkewHetTilted(TiltedHet),
    FlankedTwist { half_width: f64, rate: f64 },
    Power { base: Box<MapSpec>, p: i64, q: i64 },
    Compose { maps: Vec<MapSpec> },
    Conjugate { map: Box<MapSpec>, by: Box<MapSpec> },
}

impl MapSpec {
    pub fn build(&self) -> Result<LiftedAnnulusMap, ZooError> {
        Ok(match self {
            MapSpec::Identity => identity(),
            MapSpec::RigidRotation { turns } => rigid_rotation(*turns),
            MapSpec::Twist { half_width } => twist(*half_width),
            MapSpec::Shear { k, half_width } => shear(*k, *half_width),
            MapSpec::Drift { dy } => vertical_drift(*dy),
            MapSpec::PlaneLinear { scale, turns } => plane_linear(*scale, *turns)?,
            MapSpec::FibredRotation { profile } => fibred_rotation(profile.build()),
            MapSpec::TwiceReeb(p) => twice_reeb_plane(*p)?,
            MapSpec::DoubleReeb(p) => open_annulus_double_reeb(*p)?,
            MapSpec::SkewHet(p) => skew_heteroclinic_reference(*p)?,
            MapSpec::SkewHetTilted(p) => tilted_heteroclinic(*p)?,
            MapSpec::FlankedTwist { half_width, rate } => flanked_twist(*half_width, *rate)?,
            MapSpec::Power { base, p, q } => rigid_rotation_isotopy_power(&base.build()?, *p, *q)?,
            MapSpec::Compose { maps } => {
                let built = maps.iter().map(MapSpec::build).collect::<Result<Vec<_>, _>>()?;
                compose(&built)?
            }
            MapSpec::Conjugate { map, by } => conjugate(&map.build()?, &by.build()?),
        })
    }

    /// Short names accepted on the command line, with reference parameters.
    pub fn by_name(name: &str) -> Option<MapSpec> {
        Some(match name {
            "identity" => MapSpec::Identity,
            "rotation" | "rigid-rotation" => MapSpec::RigidRotation { turns: 1.0 / 3.0 },
            "twist" => MapSpec::Twist { half_width: 2.0 },
            "drift" => MapSpec::Drift { dy: -0.1 },
            "half" => MapSpec::PlaneLinear { scale: 0.5, turns: 0.0 },
            "quarter-half" => MapSpec::PlaneLinear {
                scale: 0.5,
                turns: 0.25,
            },
            "sin-profile" => MapSpec::FibredRotation {
                profile: ProfileSpec::SinExp,
            },
            "lorentzian" => MapSpec::FibredRotation {
                profile: ProfileSpec::Lorentzian,
            },
            "twice-reeb" => MapSpec::TwiceReeb(TwiceReeb::default()),
            "double-reeb" => MapSpec::DoubleReeb(DoubleReeb::default()),
            "skew-het" => MapSpec::SkewHet(SkewHet::default()),
            "skew-het-tilted" => MapSpec::SkewHetTilted(TiltedHet::default()),
            _ => return None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::{displacement, rho_n, validate_lift, AnnulusPoint, Window, TOL_LIFT};

    #[test]
    fn alpha_rejects_non_finite() {
        let e = Alpha1D::new("log", (-1.0, 1.0), |y: f64| y.ln()).unwrap_err();
        assert!(matches!(e, ZooError::NonFinite { .. }));
        let a = Alpha1D::new("cube", (-2.0, 2.0), |y: f64| y * y * y).unwrap();
        assert_eq!(a.bound(), 8.0);
        assert!(a.check_strictly_increasing().is_ok());
        let sq = Alpha1D::new("sq", (-2.0, 2.0), |y: f64| y * y).unwrap();
        assert!(sq.check_strictly_increasing().is_err());
    }

    #[test]
    fn fibred_rotation_examples() {
        let m = fibred_rotation(Alpha1D::constant(0.37));
        let z = AnnulusPoint::new(0.1, 4.0);
        assert!((rho_n(&m, z, 9).unwrap() - 0.37).abs() < 1e-15);
        // sin(1/r) at r = 2/π, written in turns via the 2π factor
        let m = fibred_rotation(Alpha1D::sin_exp());
        let y = -(2.0 / PI).ln();
        let z = AnnulusPoint::new(0.0, y);
        for n in [1, 5, 40] {
            assert!((rho_n(&m, z, n).unwrap() * TAU - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn power_examples() {
        let tw = twist(2.0);
        let same = rigid_rotation_isotopy_power(&tw, 0, 1).unwrap();
        let z = CoverPoint::new(0.2, 0.7);
        assert_eq!(same.forward(z), tw.forward(z));
        let two = rigid_rotation_isotopy_power(&identity(), 2, 1).unwrap();
        assert_eq!(rho_n(&two, AnnulusPoint::new(0.5, 0.5), 4).unwrap(), 2.0);
        let p = rigid_rotation_isotopy_power(&tw, 1, 2).unwrap();
        assert_eq!(rho_n(&p, AnnulusPoint::new(0.0, 0.25), 3).unwrap(), 1.5);
        let back = rigid_rotation_isotopy_power(&tw, 0, -1).unwrap();
        assert_eq!(rho_n(&back, AnnulusPoint::new(0.0, 0.25), 3).unwrap(), -0.25);
        assert!(rigid_rotation_isotopy_power(&tw, 1, 0).is_err());
    }

    #[test]
    fn plane_linear_remark_values() {
        let half = plane_linear(0.5, 0.0).unwrap();
        let quarter = plane_linear(0.5, 0.25).unwrap();
        let z = CoverPoint::new(0.3, 1.0);
        for n in [1, 7, 30] {
            assert_eq!(displacement(&half, z, n).unwrap().displacement, 0.0);
            let d = displacement(&quarter, z, n).unwrap().displacement;
            assert!((d - 0.25 * n as f64).abs() < 1e-12);
        }
        assert!(plane_linear(0.0, 0.0).is_err());
    }

    #[test]
    fn all_reference_maps_pass_lift_validation() {
        let specs = [
            "identity",
            "rotation",
            "twist",
            "drift",
            "half",
            "quarter-half",
            "sin-profile",
            "lorentzian",
            "twice-reeb",
            "double-reeb",
            "skew-het",
            "skew-het-tilted",
        ];
        for name in specs {
            let m = MapSpec::by_name(name).unwrap().build().unwrap();
            let (lo, hi) = m.band();
            let w = Window::new(-2.0, 3.0, lo.max(-6.0), hi.min(6.0));
            validate_lift(&m, w, 2000, TOL_LIFT).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn twice_reeb_circles_and_self_similarity() {
        let m = twice_reeb_plane(TwiceReeb::default()).unwrap();
        let y2 = twice_reeb_middle_level();
        for (y, rot) in [(0.0, 0.1), (y2, -0.1), (-1.0, 0.1), (2.0 + y2, -0.1)] {
            let p = m.forward(CoverPoint::new(0.4, y));
            assert!((p.x - 0.4 - rot).abs() < 1e-12, "rotation at {y}");
            assert!((p.y - y).abs() < 1e-12, "circle {y} not fixed");
        }
        // commutes with y -> y + 1
        for k in 0..200 {
            let z = CoverPoint::new(0.013 * k as f64, -1.0 + 0.01 * k as f64);
            let a = m.forward(CoverPoint::new(z.x, z.y + 1.0));
            let b = m.forward(z);
            assert!((a.x - b.x).abs() < TOL_LIFT && (a.y - b.y - 1.0).abs() < TOL_LIFT);
        }
        assert!(m.meta().params["min_displacement"] > 1e-3);
    }

    #[test]
    fn twice_reeb_rejects_fixed_points() {
        let bad = TwiceReeb {
            beta: 0.1,
            alpha: -1.0,
            stiffness: 0.5,
        };
        assert!(matches!(twice_reeb_plane(bad), Err(ZooError::FixedPoint { .. })));
        assert!(twice_reeb_plane(TwiceReeb {
            beta: 0.1,
            alpha: 0.05,
            stiffness: 0.5
        })
        .is_err());
        let flat = twice_reeb_plane(TwiceReeb {
            beta: 0.1,
            alpha: 0.1,
            stiffness: 0.5,
        })
        .unwrap();
        for k in 0..50 {
            let z = CoverPoint::new(0.0, -0.02 * k as f64);
            assert!((flat.forward(z).x - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn skew_heteroclinic_structure_at_zero_tilt() {
        let lv = Levels::default();
        let m = skew_heteroclinic_reference(SkewHet::default()).unwrap();
        for (y, rot) in [(lv.ya, 0.3), (lv.yb, -0.2)] {
            let p = m.forward(CoverPoint::new(0.25, y));
            assert!((p.y - y).abs() < 1e-15);
            assert!((p.x - 0.25 - rot).abs() < 1e-12);
        }
        // horizontals go to horizontals, and the curves move down
        for y in [lv.y0, lv.y1, lv.y2] {
            let a = m.forward(CoverPoint::new(0.1, y)).y;
            let b = m.forward(CoverPoint::new(0.6, y)).y;
            assert_eq!(a, b);
            assert!(a < y);
        }
    }

    #[test]
    fn skew_heteroclinic_preconditions() {
        let lv = Levels::default();
        let radial = heteroclinic_radial(lv, 0.1, 0.5).unwrap();
        let wrong_sign = linear_omega(lv, -0.3, 0.2);
        assert!(skew_heteroclinic(lv, wrong_sign, radial.clone(), 0.0).is_err());
        let bad_levels = Levels { y1: 0.7, ..lv };
        assert!(skew_heteroclinic(bad_levels, linear_omega(lv, 0.3, -0.2), radial, 0.0).is_err());
        let up = Alpha1D::new("up", (-11.0, 11.0), |y| y + 0.01).unwrap();
        assert!(skew_heteroclinic(lv, linear_omega(lv, 0.3, -0.2), up, 0.0).is_err());
    }

    #[test]
    fn double_reeb_rotates_at_ends_and_drifts_up() {
        let m = open_annulus_double_reeb(DoubleReeb::default()).unwrap();
        let s = m.forward(CoverPoint::new(0.0, -5.0));
        let n = m.forward(CoverPoint::new(0.0, 5.0));
        assert_eq!(s.x, 1.0);
        assert_eq!(n.x, -1.0);
        assert!(s.y > -5.0 && n.y > 5.0);
    }

    #[test]
    fn conjugation_by_identity_is_transparent() {
        let tw = twist(2.0);
        let c = conjugate(&tw, &identity());
        let z = CoverPoint::new(0.3, -1.2);
        assert_eq!(c.forward(z), tw.forward(z));
        assert_eq!(c.inverse(z), tw.inverse(z));
    }

    #[test]
    fn compose_order() {
        let c = compose(&[vertical_drift(1.0), twist(5.0)]).unwrap();
        // drift first, then twist at the new height
        assert_eq!(c.forward(CoverPoint::new(0.0, 0.5)), CoverPoint::new(1.5, 1.5));
        assert_eq!(c.inverse(CoverPoint::new(1.5, 1.5)), CoverPoint::new(0.0, 0.5));
    }

    #[test]
    fn map_spec_round_trips() {
        let spec = MapSpec::Conjugate {
            map: Box::new(MapSpec::SkewHet(SkewHet::default())),
            by: Box::new(MapSpec::Shear {
                k: 0.4,
                half_width: 2.0,
            }),
        };
        let text = serde_json::to_string(&spec).unwrap();
        let back: MapSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
        assert!(back.build().is_ok());
        let err = serde_json::from_str::<MapSpec>(r#"{"family":"twist","half_widht":1}"#);
        assert!(err.is_err());
    }
}
