//! Coordinates on the open annulus `T¹ × ℝ`, its universal cover `ℝ × ℝ`,
//! and displacement bookkeeping for lifted maps.
//!
//! Angles are measured in turns. A plane map fixing the origin is handled
//! through [`PlaneChart`], which sends the origin to the end `y → +∞`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default tolerance for lift equivariance and inverse consistency.
pub const TOL_LIFT: f64 = 1e-9;

/// Orbits with `|x|` or `|y|` beyond this value are declared escaped.
pub const OVERFLOW_GUARD: f64 = 1e9;

/// Largest horizon accepted by [`displacement`].
pub const MAX_HORIZON: u64 = 100_000_000;

#[derive(Debug, Error)]
pub enum CoverError {
    #[error("map evaluation failure at ({x}, {y})")]
    MapEvaluation { x: f64, y: f64 },
    #[error("orbit escape after {} of {requested} iterates", .partial.steps)]
    OrbitEscape { requested: i64, partial: Box<OrbitTrace> },
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("horizon {n} exceeds the configured maximum {max}")]
    HorizonTooLarge { n: i64, max: u64 },
    #[error("lift check failed: equivariance {equivariance:.3e}, inverse {inverse:.3e}, bound {observed_bound} > {declared_bound}")]
    LiftCheck {
        equivariance: f64,
        inverse: f64,
        observed_bound: f64,
        declared_bound: f64,
    },
    #[error("empty window or zero samples")]
    EmptyWindow,
}

/// A point of the universal cover: `x` is the lifted angle in turns.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverPoint {
    pub x: f64,
    pub y: f64,
}

impl CoverPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        CoverPoint { x, y }
    }

    /// `π`: the projection to the annulus.
    pub fn project(self) -> AnnulusPoint {
        AnnulusPoint::new(self.x, self.y)
    }

    /// `T^k`: shift by `k` fundamental domains.
    pub fn translate(self, k: i64) -> Self {
        CoverPoint::new(self.x + k as f64, self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn within_guard(self) -> bool {
        self.x.abs() <= OVERFLOW_GUARD && self.y.abs() <= OVERFLOW_GUARD
    }
}

/// A point of `T¹ × ℝ`; `theta` is kept in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusPoint {
    theta: f64,
    y: f64,
}

/// Fractional part in `[0, 1)`.
pub fn frac(x: f64) -> f64 {
    let t = x - x.floor();
    if t >= 1.0 {
        0.0
    } else {
        t
    }
}

impl AnnulusPoint {
    pub fn new(theta: f64, y: f64) -> Self {
        AnnulusPoint { theta: frac(theta), y }
    }

    pub fn theta(self) -> f64 {
        self.theta
    }

    pub fn y(self) -> f64 {
        self.y
    }

    /// The lift with `x` in `[0, 1)`.
    pub fn lift(self) -> CoverPoint {
        CoverPoint::new(self.theta, self.y)
    }
}

/// Log-polar identification of `ℝ² \ {0}` with the annulus:
/// polar `(r, θ)` goes to `(θ / 2π, -ln r)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct PlaneChart;

impl PlaneChart {
    pub fn to_annulus(px: f64, py: f64) -> Option<AnnulusPoint> {
        let r = px.hypot(py);
        if r == 0.0 || !r.is_finite() {
            return None;
        }
        let theta = py.atan2(px) / std::f64::consts::TAU;
        Some(AnnulusPoint::new(theta, -r.ln()))
    }

    pub fn to_plane(p: AnnulusPoint) -> (f64, f64) {
        let r = (-p.y()).exp();
        let a = p.theta() * std::f64::consts::TAU;
        (r * a.cos(), r * a.sin())
    }
}

pub type LiftFn = Arc<dyn Fn(CoverPoint) -> CoverPoint + Send + Sync>;

/// Name and numeric parameters of a map, echoed into result records.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub name: String,
    pub params: BTreeMap<String, f64>,
}

impl MapMeta {
    pub fn new(name: impl Into<String>) -> Self {
        MapMeta {
            name: name.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }
}

/// A lift `f̃` of an annulus homeomorphism together with its inverse.
///
/// `horizontal_bound` is `M₀`, a bound on `|p₁(f̃(z̃)) - p₁(z̃)|` over the
/// declared band `band.0 ≤ y ≤ band.1`.
#[derive(Clone)]
pub struct LiftedAnnulusMap {
    forward: LiftFn,
    inverse: LiftFn,
    horizontal_bound: f64,
    band: (f64, f64),
    meta: MapMeta,
}

impl fmt::Debug for LiftedAnnulusMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LiftedAnnulusMap")
            .field("meta", &self.meta)
            .field("horizontal_bound", &self.horizontal_bound)
            .field("band", &self.band)
            .finish()
    }
}

impl LiftedAnnulusMap {
    pub fn new(
        meta: MapMeta,
        band: (f64, f64),
        horizontal_bound: f64,
        forward: impl Fn(CoverPoint) -> CoverPoint + Send + Sync + 'static,
        inverse: impl Fn(CoverPoint) -> CoverPoint + Send + Sync + 'static,
    ) -> Self {
        LiftedAnnulusMap {
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
            horizontal_bound,
            band,
            meta,
        }
    }

    #[inline]
    pub fn forward(&self, p: CoverPoint) -> CoverPoint {
        (self.forward)(p)
    }

    #[inline]
    pub fn inverse(&self, p: CoverPoint) -> CoverPoint {
        (self.inverse)(p)
    }

    /// One step forward (`dir > 0`) or backward.
    #[inline]
    pub fn step(&self, p: CoverPoint, dir: i64) -> CoverPoint {
        if dir >= 0 {
            self.forward(p)
        } else {
            self.inverse(p)
        }
    }

    /// `f̃ⁿ(p)` for signed `n`, or `None` if the orbit leaves the guard.
    pub fn iterate(&self, mut p: CoverPoint, n: i64) -> Option<CoverPoint> {
        for _ in 0..n.unsigned_abs() {
            p = self.step(p, n);
            if !p.is_finite() || !p.within_guard() {
                return None;
            }
        }
        Some(p)
    }

    /// The inverse map with forward and backward swapped.
    pub fn inverted(&self) -> LiftedAnnulusMap {
        let mut meta = self.meta.clone();
        meta.name = format!("inverse({})", meta.name);
        LiftedAnnulusMap {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
            horizontal_bound: self.horizontal_bound,
            band: self.band,
            meta,
        }
    }

    pub(crate) fn forward_fn(&self) -> LiftFn {
        self.forward.clone()
    }

    pub(crate) fn inverse_fn(&self) -> LiftFn {
        self.inverse.clone()
    }

    pub fn horizontal_bound(&self) -> f64 {
        self.horizontal_bound
    }

    pub fn band(&self) -> (f64, f64) {
        self.band
    }

    pub fn meta(&self) -> &MapMeta {
        &self.meta
    }

    pub fn name(&self) -> &str {
        &self.meta.name
    }
}

/// Axis-aligned rectangle in cover coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Window {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Window { x0, x1, y0, y1 }
    }

    /// One fundamental domain over the band `[y0, y1]`.
    pub fn band(y0: f64, y1: f64) -> Self {
        Window::new(0.0, 1.0, y0, y1)
    }

    pub fn is_empty(&self) -> bool {
        !(self.x1 > self.x0 && self.y1 >= self.y0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftReport {
    pub samples: usize,
    pub max_equivariance_error: f64,
    pub max_inverse_error: f64,
    pub observed_bound: f64,
}

impl LiftReport {
    pub fn within(&self, tol: f64, declared_bound: f64) -> bool {
        self.max_equivariance_error <= tol
            && self.max_inverse_error <= tol
            && self.observed_bound <= declared_bound + tol
    }
}

/// Samples the lift axioms on `window` with a fixed seed.
///
/// Fails with [`CoverError::LiftCheck`] when either error exceeds `tol`
/// or the observed horizontal displacement exceeds the declared bound.
pub fn validate_lift(
    map: &LiftedAnnulusMap,
    window: Window,
    samples: usize,
    tol: f64,
) -> Result<LiftReport, CoverError> {
    if window.is_empty() || samples == 0 {
        return Err(CoverError::EmptyWindow);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6c69_6674);
    let mut report = LiftReport {
        samples,
        max_equivariance_error: 0.0,
        max_inverse_error: 0.0,
        observed_bound: 0.0,
    };
    for _ in 0..samples {
        let p = CoverPoint::new(
            rng.random_range(window.x0..window.x1),
            if window.y1 > window.y0 {
                rng.random_range(window.y0..window.y1)
            } else {
                window.y0
            },
        );
        let fp = map.forward(p);
        if !fp.is_finite() {
            return Err(CoverError::MapEvaluation { x: p.x, y: p.y });
        }
        let ft = map.forward(p.translate(1));
        if !ft.is_finite() {
            return Err(CoverError::MapEvaluation { x: p.x + 1.0, y: p.y });
        }
        let back = map.inverse(fp);
        if !back.is_finite() {
            return Err(CoverError::MapEvaluation { x: fp.x, y: fp.y });
        }
        let eq = (ft.x - fp.x - 1.0).abs().max((ft.y - fp.y).abs());
        let inv = (back.x - p.x).abs().max((back.y - p.y).abs());
        report.max_equivariance_error = report.max_equivariance_error.max(eq);
        report.max_inverse_error = report.max_inverse_error.max(inv);
        report.observed_bound = report.observed_bound.max((fp.x - p.x).abs());
    }
    if report.within(tol, map.horizontal_bound()) {
        Ok(report)
    } else {
        Err(CoverError::LiftCheck {
            equivariance: report.max_equivariance_error,
            inverse: report.max_inverse_error,
            observed_bound: report.observed_bound,
            declared_bound: map.horizontal_bound(),
        })
    }
}

/// A computed orbit segment: total lifted x-displacement and the y-trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrbitTrace {
    pub start: CoverPoint,
    pub end: CoverPoint,
    /// Number of iterates actually applied (absolute value).
    pub steps: u64,
    pub displacement: f64,
    /// `y` of `f̃^k(z̃)` for `k = 0, ±1, …` in the direction of `n`.
    pub ys: Vec<f64>,
}

/// `p₁(f̃ⁿ(z̃)) - p₁(z̃)` for signed `n`, using the inverse lift when `n < 0`.
pub fn displacement(map: &LiftedAnnulusMap, z: CoverPoint, n: i64) -> Result<OrbitTrace, CoverError> {
    if n.unsigned_abs() > MAX_HORIZON {
        return Err(CoverError::HorizonTooLarge { n, max: MAX_HORIZON });
    }
    let mut ys = Vec::with_capacity(n.unsigned_abs() as usize + 1);
    ys.push(z.y);
    let mut p = z;
    for k in 0..n.unsigned_abs() {
        let q = map.step(p, n);
        if !q.is_finite() || !q.within_guard() {
            let partial = OrbitTrace {
                start: z,
                end: p,
                steps: k,
                displacement: p.x - z.x,
                ys,
            };
            return Err(CoverError::OrbitEscape {
                requested: n,
                partial: Box::new(partial),
            });
        }
        p = q;
        ys.push(p.y);
    }
    Ok(OrbitTrace {
        start: z,
        end: p,
        steps: n.unsigned_abs(),
        displacement: p.x - z.x,
        ys,
    })
}

/// `ρ_n(z)`: average displacement per iterate over `n ≥ 1` steps.
pub fn rho_n(map: &LiftedAnnulusMap, z: AnnulusPoint, n: u64) -> Result<f64, CoverError> {
    if n == 0 {
        return Err(CoverError::ZeroHorizon);
    }
    let n = i64::try_from(n).map_err(|_| CoverError::HorizonTooLarge {
        n: i64::MAX,
        max: MAX_HORIZON,
    })?;
    let trace = displacement(map, z.lift(), n)?;
    Ok(trace.displacement / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn twist() -> LiftedAnnulusMap {
        LiftedAnnulusMap::new(
            MapMeta::new("twist"),
            (-2.0, 2.0),
            2.0,
            |p| CoverPoint::new(p.x + p.y, p.y),
            |p| CoverPoint::new(p.x - p.y, p.y),
        )
    }

    fn rotation(t: f64) -> LiftedAnnulusMap {
        LiftedAnnulusMap::new(
            MapMeta::new("rotation"),
            (-1.0, 1.0),
            t.abs(),
            move |p| CoverPoint::new(p.x + t, p.y),
            move |p| CoverPoint::new(p.x - t, p.y),
        )
    }

    #[test]
    fn annulus_point_reduces_theta() {
        assert_eq!(AnnulusPoint::new(2.25, 1.0).theta(), 0.25);
        assert_eq!(AnnulusPoint::new(-0.25, 1.0).theta(), 0.75);
        assert_eq!(AnnulusPoint::new(-1e-18, 0.0).theta(), 0.0);
        let p = CoverPoint::new(-3.5, 2.0).project();
        assert_eq!(p.theta(), 0.5);
    }

    #[test]
    fn plane_chart_round_trip() {
        let a = PlaneChart::to_annulus(0.0, 0.5).unwrap();
        assert!((a.theta() - 0.25).abs() < 1e-15);
        assert!((a.y() - 2f64.ln()).abs() < 1e-15);
        let (px, py) = PlaneChart::to_plane(a);
        assert!(px.abs() < 1e-15 && (py - 0.5).abs() < 1e-15);
        assert!(PlaneChart::to_annulus(0.0, 0.0).is_none());
    }

    #[test]
    fn validate_identity_and_rotation() {
        let id = LiftedAnnulusMap::new(MapMeta::new("id"), (-1.0, 1.0), 0.0, |p| p, |p| p);
        let r = validate_lift(&id, Window::band(-3.0, 3.0), 100, TOL_LIFT).unwrap();
        assert_eq!(r.max_equivariance_error, 0.0);
        assert_eq!(r.max_inverse_error, 0.0);
        assert_eq!(r.observed_bound, 0.0);
        let r = validate_lift(&rotation(1.0 / 3.0), Window::band(-1.0, 1.0), 100, TOL_LIFT).unwrap();
        assert!(r.max_equivariance_error < 1e-15);
        assert!((r.observed_bound - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn twist_bound_is_band_height() {
        let r = validate_lift(&twist(), Window::band(-2.0, 2.0), 4000, TOL_LIFT).unwrap();
        assert!(r.observed_bound <= 2.0 && r.observed_bound > 1.99);
        // outside the declared band the bound is violated
        assert!(validate_lift(&twist(), Window::band(-3.0, 3.0), 4000, TOL_LIFT).is_err());
    }

    #[test]
    fn non_finite_output_is_reported() {
        let bad = LiftedAnnulusMap::new(
            MapMeta::new("bad"),
            (-1.0, 1.0),
            1.0,
            |p| CoverPoint::new(p.x + 1.0 / p.y.max(0.0), p.y),
            |p| p,
        );
        match validate_lift(&bad, Window::band(-1.0, 1.0), 50, TOL_LIFT) {
            Err(CoverError::MapEvaluation { y, .. }) => assert!(y <= 0.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn displacement_examples() {
        let id = LiftedAnnulusMap::new(MapMeta::new("id"), (-1.0, 1.0), 0.0, |p| p, |p| p);
        assert_eq!(
            displacement(&id, CoverPoint::new(0.3, 0.0), 5).unwrap().displacement,
            0.0
        );
        let d = displacement(&rotation(1.0 / 3.0), CoverPoint::new(0.0, 0.0), 3).unwrap();
        assert!((d.displacement - 1.0).abs() < 1e-15);
        let d = displacement(&twist(), CoverPoint::new(0.0, 0.25), 8).unwrap();
        assert_eq!(d.displacement, 2.0);
        assert_eq!(d.ys.len(), 9);
        let d = displacement(&twist(), CoverPoint::new(0.0, 0.25), -8).unwrap();
        assert_eq!(d.displacement, -2.0);
    }

    #[test]
    fn escape_returns_partial_trace() {
        let blow = LiftedAnnulusMap::new(
            MapMeta::new("blow"),
            (-1.0, 1.0),
            0.0,
            |p| CoverPoint::new(p.x, p.y * 1e3 + 1.0),
            |p| CoverPoint::new(p.x, (p.y - 1.0) / 1e3),
        );
        match displacement(&blow, CoverPoint::new(0.0, 1.0), 10) {
            Err(CoverError::OrbitEscape { partial, requested }) => {
                assert_eq!(requested, 10);
                assert_eq!(partial.steps, 2);
                assert_eq!(partial.ys.len(), 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rho_n_examples() {
        let z = AnnulusPoint::new(0.7, 0.25);
        for n in [1, 2, 17, 100] {
            assert_eq!(rho_n(&twist(), z, n).unwrap(), 0.25);
        }
        assert!((rho_n(&rotation(1.0 / 3.0), z, 7).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(rho_n(&twist(), z, 0), Err(CoverError::ZeroHorizon)));
    }
}
