//! Unstable and stable sets of a band between free curves, their branches
//! (connected components in the cover) and the heteroclinic-orbit
//! experiment built on them.
//!
//! A band `A_i` is the closed region between an upper curve `Γ_i` and a
//! lower curve `Γ_{i+1}`, both attracting. `Λ⁻_n` is the part of `A_i`
//! reached by `fⁿ(A_i)`, `Λ⁺_n` the part reached by `f⁻ⁿ(A_i)`. Both are
//! invariant under the deck translation, so they are computed on a
//! periodic grid and tiled into an unwrapped window only when a branch is
//! extracted.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cover::{CoverPoint, LiftedAnnulusMap};
use crate::invsets::{
    free_curve_classify, one_sided_survivors, region_between, theta_maximal_with, CellImages, Connectivity, CurveClass,
    CurveReport, GraphCurve, Grid, GridRegion, InvError, RegionRecord,
};
use crate::rotset::{rho_k, EstimatorOptions, RotError, RotationSetEstimate, SamplingPlan};

#[derive(Debug, Error)]
pub enum BranchError {
    #[error(transparent)]
    Region(#[from] InvError),
    #[error(transparent)]
    Rotation(#[from] RotError),
    #[error("precondition refused: {0}")]
    Refused(String),
    #[error("base point ({x}, {y}) is not in the set")]
    NotInSet { x: f64, y: f64 },
    #[error("branch reaches the edge of a {tiles}-tile window")]
    WindowOverflow { tiles: usize },
    #[error("map produced a non-finite image")]
    NonFinite,
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Closed band between two graphs over the circle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub upper: GraphCurve,
    pub lower: GraphCurve,
    /// `i` in `A_i`; only used for labels.
    pub index: u8,
}

impl BandSpec {
    pub fn new(upper: GraphCurve, lower: GraphCurve, index: u8) -> Result<Self, BranchError> {
        if lower.max() >= upper.min() {
            return Err(InvError::CurvesCross.into());
        }
        Ok(BandSpec { upper, lower, index })
    }

    pub fn horizontal(upper: f64, lower: f64, index: u8) -> Result<Self, BranchError> {
        BandSpec::new(GraphCurve::horizontal(upper), GraphCurve::horizontal(lower), index)
    }

    /// Periodic grid whose first and last rows are centered on the extreme
    /// heights of the two curves.
    pub fn grid(&self, nx: usize, ny: usize) -> Result<Grid, BranchError> {
        Ok(Grid::band_centered(self.lower.min(), self.upper.max(), nx, ny)?)
    }

    pub fn region(&self, grid: Grid) -> GridRegion {
        region_between(grid, &self.lower, &self.upper)
    }

    /// Exact membership of a point, curves included.
    pub fn contains(&self, p: CoverPoint) -> bool {
        p.is_finite() && self.lower.clearance(p) >= 0.0 && self.upper.clearance(p) <= 0.0
    }

    /// Cells within half a row of the curve.
    fn curve_cells(grid: Grid, curve: &GraphCurve) -> GridRegion {
        let h = 0.5 * grid.dy();
        GridRegion::from_predicate(grid, |p| curve.clearance(p).abs() <= h * (1.0 + 1e-9))
    }
}

/// `Unstable` is `Λ⁻` (images of the band), `Stable` is `Λ⁺` (preimages).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaSide {
    Unstable,
    Stable,
}

impl LambdaSide {
    /// Direction in which the defining orbits must stay in the band.
    fn survival_dir(self) -> i64 {
        match self {
            LambdaSide::Unstable => -1,
            LambdaSide::Stable => 1,
        }
    }
}

/// `Λ_0 ⊇ Λ_1 ⊇ … ⊇ Λ_N` on a periodic grid.
#[derive(Clone, Debug)]
pub struct LambdaSequence {
    pub side: LambdaSide,
    pub regions: Vec<GridRegion>,
}

impl LambdaSequence {
    pub fn counts(&self) -> Vec<usize> {
        self.regions.iter().map(GridRegion::count).collect()
    }

    pub fn last(&self) -> &GridRegion {
        self.regions.last().expect("sequence starts with the band")
    }
}

/// Conservative `Λ_n` for `n = 0..=depth`, via
/// `Λ_{n+1} = image(Λ_n) ∩ Λ_n` with one-cell-dilated cell images.
pub fn lambda_sequence(
    map: &LiftedAnnulusMap,
    band: &BandSpec,
    grid: Grid,
    depth: u32,
    side: LambdaSide,
) -> Result<LambdaSequence, BranchError> {
    if !grid.periodic {
        return Err(InvError::InvalidGrid("Λ sets are computed on a periodic grid".into()).into());
    }
    let images = CellImages::new(map, grid, grid, side == LambdaSide::Stable);
    let mut cur = band.region(grid);
    let mut regions = vec![cur.clone()];
    for _ in 0..depth {
        let img = images.image(&cur)?;
        if img.non_finite {
            return Err(BranchError::NonFinite);
        }
        cur = img.region.intersect(&cur)?;
        regions.push(cur.clone());
    }
    Ok(LambdaSequence { side, regions })
}

pub fn lambda_n(
    map: &LiftedAnnulusMap,
    band: &BandSpec,
    grid: Grid,
    n: u32,
    side: LambdaSide,
) -> Result<GridRegion, BranchError> {
    Ok(lambda_sequence(map, band, grid, n, side)?.last().clone())
}

/// Escape-time form of `Λ_n`: cells whose center orbit (backward for `Λ⁻`,
/// forward for `Λ⁺`) stays in the band, dilated by one cell, for `n` steps.
pub fn lambda_escape(
    map: &LiftedAnnulusMap,
    band: &BandSpec,
    grid: Grid,
    n: u32,
    side: LambdaSide,
) -> Result<GridRegion, BranchError> {
    if !grid.periodic {
        return Err(InvError::InvalidGrid("Λ sets are computed on a periodic grid".into()).into());
    }
    let a = band.region(grid);
    if n == 0 {
        return Ok(a);
    }
    Ok(one_sided_survivors(map, &a, n, side.survival_dir(), 1))
}

/// Depth-`N` stand-in for `Λ = ⋂ Λ_n`.
///
/// Both characterizations are computed. The conservative intersection
/// smears wherever the map shears strongly, so downstream code uses the
/// escape-time set as `estimate`; `escape_outside` checks that it sits
/// inside the conservative set up to one cell.
#[derive(Clone, Debug)]
pub struct LambdaLimit {
    pub side: LambdaSide,
    pub depth: u32,
    pub estimate: GridRegion,
    pub conservative: GridRegion,
    /// Cell counts of the conservative sequence, `n = 0..=depth`.
    pub counts: Vec<usize>,
    /// Escape-time cells outside `dilate(conservative, 1)`.
    pub escape_outside: usize,
    /// Conservative cells outside `dilate(estimate, 1)`.
    pub conservative_outside: usize,
    /// See [`invariance_violations`], evaluated on `estimate`.
    pub invariance_violations: usize,
    pub meets_lower: bool,
    pub meets_upper: bool,
}

pub fn lambda_limit(
    map: &LiftedAnnulusMap,
    band: &BandSpec,
    grid: Grid,
    depth: u32,
    side: LambdaSide,
) -> Result<LambdaLimit, BranchError> {
    if depth == 0 {
        return Err(InvError::ZeroHorizon.into());
    }
    let seq = lambda_sequence(map, band, grid, depth, side)?;
    let counts = seq.counts();
    let conservative = seq.last().clone();
    let estimate = lambda_escape(map, band, grid, depth, side)?;
    let escape_outside = estimate.difference(&conservative.dilate(1))?.count();
    let conservative_outside = conservative.difference(&estimate.dilate(1))?.count();
    let invariance_violations = invariance_violations(map, band, &estimate, side.survival_dir());
    let meets_lower = estimate.intersects(&BandSpec::curve_cells(grid, &band.lower))?;
    let meets_upper = estimate.intersects(&BandSpec::curve_cells(grid, &band.upper))?;
    Ok(LambdaLimit {
        side,
        depth,
        estimate,
        conservative,
        counts,
        escape_outside,
        conservative_outside,
        invariance_violations,
        meets_lower,
        meets_upper,
    })
}

/// Counts cells whose center, moved one step in `dir`, lands in the band
/// but more than one cell away from `region`. For `Λ⁻` the invariant
/// direction is backward (`dir = -1`), for `Λ⁺` forward.
pub fn invariance_violations(map: &LiftedAnnulusMap, band: &BandSpec, region: &GridRegion, dir: i64) -> usize {
    let g = *region.grid();
    region
        .cells()
        .par_iter()
        .filter(|&&idx| {
            let (i, j) = g.coords(idx);
            let q = map.step(g.center(i, j), dir);
            band.contains(q) && !region.contains_dilated(q, 1)
        })
        .count()
}

/// Connected component of a tiled `Λ` set through a base point.
#[derive(Clone, Debug)]
pub struct Branch {
    pub side: LambdaSide,
    pub base: CoverPoint,
    pub region: GridRegion,
    pub cells: usize,
    pub first_tile: i64,
    pub tiles: usize,
    pub meets_lower: bool,
    pub meets_upper: bool,
    pub compact: bool,
    /// `p₁`-extent `[min, max]` of the component's cells.
    pub extent: [f64; 2],
}

impl Branch {
    pub fn diameter(&self) -> f64 {
        self.extent[1] - self.extent[0]
    }

    pub fn summary(&self) -> BranchSummary {
        BranchSummary {
            base: self.base,
            cells: self.cells,
            compact: self.compact,
            meets_lower: self.meets_lower,
            meets_upper: self.meets_upper,
            extent: self.extent,
            tiles: self.tiles,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSummary {
    pub base: CoverPoint,
    pub cells: usize,
    pub compact: bool,
    pub meets_lower: bool,
    pub meets_upper: bool,
    pub extent: [f64; 2],
    pub tiles: usize,
}

/// Default window width: `⌈8(2M₀ + 1)⌉` tiles.
pub fn default_tiles(m0: f64) -> usize {
    (8.0 * (2.0 * m0 + 1.0)).ceil().max(1.0) as usize
}

/// Component of `lambda` (periodic) through `x`, computed on `tiles` copies
/// of the grid centered on the tile of `x`. With `require_compact` a
/// component touching the window's side edges is an error.
pub fn branch_of(
    lambda: &GridRegion,
    band: &BandSpec,
    side: LambdaSide,
    x: CoverPoint,
    tiles: usize,
    require_compact: bool,
) -> Result<Branch, BranchError> {
    if tiles == 0 {
        return Err(BranchError::Config("window needs at least one tile".into()));
    }
    let g = *lambda.grid();
    let first_tile = x.x.floor() as i64 - (tiles / 2) as i64;
    let tiled = g.tiled(first_tile, tiles)?;
    let window = lambda.tile_onto(tiled)?;
    let Some((i, j)) = tiled.cell_of(x) else {
        return Err(BranchError::NotInSet { x: x.x, y: x.y });
    };
    let Some(comp) = window.component_of(tiled.index(i, j), Connectivity::Four) else {
        return Err(BranchError::NotInSet { x: x.x, y: x.y });
    };
    let compact = !(comp.flags.left || comp.flags.right);
    if require_compact && !compact {
        return Err(BranchError::WindowOverflow { tiles });
    }
    let meets_lower = comp.region.intersects(&BandSpec::curve_cells(tiled, &band.lower))?;
    let meets_upper = comp.region.intersects(&BandSpec::curve_cells(tiled, &band.upper))?;
    let (mut lo, mut hi) = (usize::MAX, 0);
    for idx in comp.region.cells() {
        let (ci, _) = tiled.coords(idx);
        lo = lo.min(ci);
        hi = hi.max(ci);
    }
    let extent = [
        tiled.x0 + lo as f64 * tiled.dx(),
        tiled.x0 + (hi + 1) as f64 * tiled.dx(),
    ];
    Ok(Branch {
        side,
        base: x,
        cells: comp.cells,
        region: comp.region,
        first_tile,
        tiles,
        meets_lower,
        meets_upper,
        compact,
        extent,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum H2Status {
    /// The image crosses or touches the lower curve.
    Meets,
    Above,
    Below,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H2Step {
    pub n: u32,
    pub status: H2Status,
    pub min_clearance: f64,
    pub max_clearance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H2Report {
    pub steps: Vec<H2Step>,
    /// Every `n ≥ 1` up to the horizon meets.
    pub holds: bool,
    pub first_failure: Option<u32>,
    /// Range of heights of `f^N(Γ₀)` at the horizon.
    pub limit_level: [f64; 2],
}

/// Tracks `fⁿ(Γ₀)` against `Γ₂` for `n = 1..=horizon`. The image of the
/// curve is connected, so sample points on both sides prove a crossing.
pub fn h2_check(
    map: &LiftedAnnulusMap,
    gamma0: &GraphCurve,
    gamma2: &GraphCurve,
    horizon: u32,
    samples: usize,
) -> H2Report {
    let mut pts: Vec<CoverPoint> = gamma0.samples(samples.max(2)).collect();
    let mut steps = Vec::with_capacity(horizon as usize);
    let mut limit_level = [f64::NAN; 2];
    for n in 1..=horizon {
        pts.par_iter_mut().for_each(|p| *p = map.forward(*p));
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut ylo, mut yhi) = (f64::INFINITY, f64::NEG_INFINITY);
        let mut touch = false;
        for p in &pts {
            let c = gamma2.clearance(*p);
            touch |= c.abs() <= 1e-12 * (1.0 + p.y.abs());
            lo = lo.min(c);
            hi = hi.max(c);
            ylo = ylo.min(p.y);
            yhi = yhi.max(p.y);
        }
        let status = if touch || (lo < 0.0 && hi > 0.0) {
            H2Status::Meets
        } else if lo > 0.0 {
            H2Status::Above
        } else {
            H2Status::Below
        };
        limit_level = [ylo, yhi];
        steps.push(H2Step {
            n,
            status,
            min_clearance: lo,
            max_clearance: hi,
        });
    }
    let first_failure = steps.iter().find(|s| s.status != H2Status::Meets).map(|s| s.n);
    H2Report {
        holds: first_failure.is_none(),
        steps,
        first_failure,
        limit_level,
    }
}

/// First `n ≤ n_max` with `fⁿ(p) ∈ target` for each point, dropping orbits
/// that leave `within`.
fn hit_times(
    map: &LiftedAnnulusMap,
    pts: &[CoverPoint],
    target: &GridRegion,
    within: &BandSpec,
    n_max: u32,
) -> Vec<Option<u32>> {
    pts.par_iter()
        .map(|&p0| {
            let mut p = p0;
            for n in 1..=n_max {
                p = map.forward(p);
                if !within.contains(p) {
                    return None;
                }
                if target.contains(p) {
                    return Some(n);
                }
            }
            None
        })
        .collect()
}

fn first_hit(
    map: &LiftedAnnulusMap,
    pts: &[CoverPoint],
    target: &GridRegion,
    within: &BandSpec,
    n_max: u32,
) -> Option<u32> {
    hit_times(map, pts, target, within, n_max).into_iter().flatten().min()
}

/// Splits the lower curve of `band` at the unwrapped region `blocker`:
/// returns the left end of the part reachable from the right edge of the
/// window through the band minus `blocker`, or `None` if no such part.
pub fn right_part_of_lower_curve(band: &BandSpec, blocker: &GridRegion) -> Result<Option<f64>, BranchError> {
    let g = *blocker.grid();
    if g.periodic {
        return Err(InvError::NeedsUnwrapped.into());
    }
    let free = band.region(g).difference(blocker)?;
    let curve = BandSpec::curve_cells(g, &band.lower);
    let mut left = None::<f64>;
    for comp in free.components(Connectivity::Four) {
        if !comp.flags.right {
            continue;
        }
        for idx in comp.region.intersect(&curve)?.cells() {
            let (i, _) = g.coords(idx);
            let xv = g.x0 + i as f64 * g.dx();
            left = Some(left.map_or(xv, |l| l.min(xv)));
        }
    }
    Ok(left)
}

/// Knobs of [`theorem_c_experiment`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoremCConfig {
    /// Cells per band grid.
    pub nx: usize,
    pub ny: usize,
    pub theta_horizon: u32,
    pub lambda_depth: u32,
    pub rho_horizon: u64,
    /// The `Θ` rotation sets must clear zero by this much.
    pub h3_margin: f64,
    pub h2_horizon: u32,
    pub h2_samples: usize,
    pub sweep_max: u32,
    pub k_schedule: Vec<u64>,
    pub tolerance: f64,
    pub bisection_steps: u32,
    pub survival_horizon: u64,
    pub orbit_cap: u64,
    pub tiles: Option<usize>,
}

impl Default for TheoremCConfig {
    fn default() -> Self {
        TheoremCConfig {
            nx: 256,
            ny: 256,
            theta_horizon: 200,
            lambda_depth: 60,
            rho_horizon: 400,
            h3_margin: 0.05,
            h2_horizon: 50,
            h2_samples: 4096,
            sweep_max: 200,
            k_schedule: vec![10, 100, 1000],
            tolerance: 0.02,
            bisection_steps: 40,
            survival_horizon: 5000,
            orbit_cap: 1_000_000,
            tiles: None,
        }
    }
}

/// Results of the precondition gates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gates {
    pub curves: Vec<CurveReport>,
    pub theta_cells: [usize; 2],
    pub rho_theta: [RotationSetEstimate; 2],
    pub h2: H2Report,
}

/// One sample of the mixed segment average at scale `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedSample {
    pub k: u64,
    /// `p₁(z) - k M₀`.
    pub level: f64,
    pub n_plus: u64,
    pub n_minus: u64,
    pub x_plus: f64,
    pub x_minus: f64,
    pub average: f64,
    /// `M₀ / (n⁺ + n⁻)`.
    pub bound: f64,
}

impl MixedSample {
    pub fn within_bound(&self) -> bool {
        self.average.abs() <= self.bound * (1.0 + 1e-9)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Placement {
    /// `p₁(y) > M + M₁⁺` with `M` the right edge of `Λ₀⁻(x)`.
    Applied { m: f64, m1_plus: f64, shift: i64 },
    /// Branches are not compact; `y` stays in the tile of `x`.
    Skipped { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub map: String,
    pub m0: f64,
    pub curves: [GraphCurve; 3],
    pub gates: Gates,
    pub branch_unstable: BranchSummary,
    pub branch_stable: BranchSummary,
    pub placement: Placement,
    /// First `n` with `fⁿ(Λ₀⁻(x)) ∩ Λ₁⁺(y)` nonempty on the grid.
    pub n: u32,
    /// Column `x` and final bisection interval in `y` for the pre-witness.
    pub column: f64,
    pub interval: [f64; 2],
    pub pre_witness: CoverPoint,
    pub witness: CoverPoint,
    /// Whether `f^n(pre_witness)` is still in the stable branch cells.
    pub witness_in_branch: bool,
    /// Left end of the part of `Γ₁` to the right of `Λ₀⁻(x) ∪ Λ₀⁺(x)`.
    pub gamma1_right: Option<f64>,
    /// First `n` with `fⁿ(Γ₁ʳ)` meeting the stable branch, within the window.
    pub gamma1_hit: Option<u32>,
    pub survival: [u64; 2],
    /// `|n| ≤ horizon` orbit points of the witness stay in `A₀ ∪ A₁`.
    pub horizon: u64,
    pub mixed: Vec<MixedSample>,
    /// Bound on `|average|` at the largest `k`; smaller `k` only need the
    /// `M₀ / (n⁺ + n⁻)` bound.
    pub tolerance: f64,
    /// `(n, p₁ - p₁(z))` along the forward and backward orbit, subsampled.
    pub forward_trace: Vec<(u64, f64)>,
    pub backward_trace: Vec<(u64, f64)>,
    pub unstable_region: RegionRecord,
    pub stable_region: RegionRecord,
}

impl Certificate {
    /// Re-checks every recorded inequality from the stored numbers alone.
    pub fn check(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if self.interval[0] > self.pre_witness.y || self.pre_witness.y > self.interval[1] {
            bad.push("pre-witness outside its bisection interval".to_string());
        }
        let k_max = self.mixed.iter().map(|s| s.k).max().unwrap_or(0);
        if self.mixed.is_empty() {
            bad.push("no mixed samples".to_string());
        }
        for s in &self.mixed {
            if s.n_plus < s.k || s.n_minus < s.k {
                bad.push(format!("k={}: fewer than k steps on one side", s.k));
            }
            if !(s.x_plus < s.level && s.x_minus < s.level) {
                bad.push(format!("k={}: an endpoint is not below the level", s.k));
            }
            if s.x_plus < s.level - self.m0 * (1.0 + 1e-9) || s.x_minus < s.level - self.m0 * (1.0 + 1e-9) {
                bad.push(format!("k={}: an endpoint overshoots the level by more than M0", s.k));
            }
            let avg = (s.x_plus - s.x_minus) / (s.n_plus + s.n_minus) as f64;
            if (avg - s.average).abs() > 1e-12 * (1.0 + avg.abs()) {
                bad.push(format!("k={}: stored average does not match endpoints", s.k));
            }
            if !s.within_bound() {
                bad.push(format!(
                    "k={}: |average| {} exceeds M0/(n+ + n-) = {}",
                    s.k, s.average, s.bound
                ));
            }
            if s.k == k_max && s.average.abs() > self.tolerance {
                bad.push(format!(
                    "k={}: |average| {} exceeds tolerance {}",
                    s.k, s.average, self.tolerance
                ));
            }
            if s.n_plus.max(s.n_minus) > self.horizon {
                bad.push(format!("k={}: sample beyond the certified horizon", s.k));
            }
        }
        for (label, r) in [
            ("unstable", &self.gates.rho_theta[0]),
            ("stable", &self.gates.rho_theta[1]),
        ] {
            if r.is_empty() {
                bad.push(format!("{label} band rotation set is empty"));
            }
        }
        bad
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Inconclusive {
    pub stage: String,
    pub reason: String,
    pub gates: Option<Gates>,
    /// Largest horizon reached before giving up.
    pub horizon: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum TheoremCOutcome {
    Certificate(Box<Certificate>),
    Inconclusive(Box<Inconclusive>),
}

/// Steps (up to `cap`) that the orbit of `p` stays in `band` going `dir`.
fn survival(map: &LiftedAnnulusMap, band: &BandSpec, p: CoverPoint, dir: i64, cap: u64) -> u64 {
    let mut q = p;
    for k in 1..=cap {
        q = map.step(q, dir);
        if !band.contains(q) {
            return k - 1;
        }
    }
    cap
}

/// Iterates `z` in `dir` until `p₁` drops below `level`. Returns the step
/// count and the endpoint, or `None` if the orbit left `band` or hit `cap`.
fn first_below(
    map: &LiftedAnnulusMap,
    band: &BandSpec,
    z: CoverPoint,
    dir: i64,
    level: f64,
    cap: u64,
) -> Option<(u64, f64)> {
    let mut q = z;
    for k in 1..=cap {
        q = map.step(q, dir);
        if !band.contains(q) {
            return None;
        }
        if q.x < level {
            return Some((k, q.x));
        }
    }
    None
}

fn trace(map: &LiftedAnnulusMap, z: CoverPoint, dir: i64, len: u64) -> Vec<(u64, f64)> {
    let stride = (len / 512).max(1);
    let mut q = z;
    let mut out = vec![(0, 0.0)];
    for k in 1..=len {
        q = map.step(q, dir);
        if k % stride == 0 || k == len {
            out.push((k, q.x - z.x));
        }
    }
    out
}

/// Mixed segment samples of `z` for each `k` in the schedule.
pub fn mixed_samples(
    map: &LiftedAnnulusMap,
    band: &BandSpec,
    z: CoverPoint,
    m0: f64,
    ks: &[u64],
    cap: u64,
) -> Result<Vec<MixedSample>, String> {
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        let level = z.x - k as f64 * m0;
        let (n_plus, x_plus) = first_below(map, band, z, 1, level, cap).ok_or_else(|| {
            format!("k={k}: forward orbit left the bands or did not reach the level within {cap} steps")
        })?;
        let (n_minus, x_minus) = first_below(map, band, z, -1, level, cap).ok_or_else(|| {
            format!("k={k}: backward orbit left the bands or did not reach the level within {cap} steps")
        })?;
        let tot = (n_plus + n_minus) as f64;
        out.push(MixedSample {
            k,
            level,
            n_plus,
            n_minus,
            x_plus,
            x_minus,
            average: (x_plus - x_minus) / tot,
            bound: m0 / tot,
        });
    }
    Ok(out)
}

/// Cell of the largest component of `theta` (ties: least cell) that lies in
/// `lambda`, as a center point.
fn pick_base(theta: &GridRegion, lambda: &GridRegion) -> Option<CoverPoint> {
    let g = *theta.grid();
    let mut comps = theta.components(Connectivity::Four);
    comps.sort_by(|a, b| b.cells.cmp(&a.cells).then(a.least_cell.cmp(&b.least_cell)));
    comps.iter().find_map(|c| {
        c.region
            .cells()
            .into_iter()
            .find(|&idx| lambda.get_index(idx))
            .map(|idx| {
                let (i, j) = g.coords(idx);
                g.center(i, j)
            })
    })
}

struct Setup {
    m0: f64,
    bands: [BandSpec; 2],
    whole: BandSpec,
    gates: Gates,
    theta: [GridRegion; 2],
}

fn gates(map: &LiftedAnnulusMap, curves: &[GraphCurve; 3], cfg: &TheoremCConfig) -> Result<Setup, BranchError> {
    let a0 = BandSpec::new(curves[0].clone(), curves[1].clone(), 0)?;
    let a1 = BandSpec::new(curves[1].clone(), curves[2].clone(), 1)?;
    let whole = BandSpec::new(curves[0].clone(), curves[2].clone(), 0)?;
    let g0 = a0.grid(cfg.nx, cfg.ny)?;
    let g1 = a1.grid(cfg.nx, cfg.ny)?;
    let res = g0.dy().min(g1.dy());
    let mut reports = Vec::new();
    for (k, c) in curves.iter().enumerate() {
        let r = free_curve_classify(map, c, 4 * cfg.nx, res);
        if r.class != CurveClass::FreeAttracting {
            return Err(BranchError::Refused(format!(
                "curve {k} is {:?} (margin {:.3e}), not free attracting",
                r.class, r.margin
            )));
        }
        reports.push(r);
    }
    let opts = EstimatorOptions {
        membership_dilation: 1,
        ..EstimatorOptions::default()
    };
    let mut thetas = Vec::new();
    let mut rhos = Vec::new();
    for (k, (band, grid)) in [(&a0, g0), (&a1, g1)].into_iter().enumerate() {
        let th = theta_maximal_with(map, &band.region(grid), cfg.theta_horizon, 1)?;
        if th.region.is_empty() {
            return Err(BranchError::Refused(format!(
                "maximal invariant set of band {k} is empty on the grid"
            )));
        }
        let rho = rho_k(map, &th.region, 1, cfg.rho_horizon, &SamplingPlan::default(), &opts)?.tail;
        let hull = rho
            .hull()
            .ok_or_else(|| BranchError::Refused(format!("no rotation samples on band {k}")))?;
        let ok = if k == 0 {
            hull.lo() > cfg.h3_margin
        } else {
            hull.hi() < -cfg.h3_margin
        };
        if !ok {
            return Err(BranchError::Refused(format!(
                "rotation set [{}, {}] of band {k} does not clear zero by {}",
                hull.lo(),
                hull.hi(),
                cfg.h3_margin
            )));
        }
        thetas.push(th.region);
        rhos.push(rho);
    }
    let h2 = h2_check(map, &curves[0], &curves[2], cfg.h2_horizon, cfg.h2_samples);
    let mut rhos = rhos.into_iter();
    let mut thetas = thetas.into_iter();
    let theta = [thetas.next().expect("two bands"), thetas.next().expect("two bands")];
    Ok(Setup {
        m0: map.horizontal_bound(),
        bands: [a0, a1],
        whole,
        gates: Gates {
            curves: reports,
            theta_cells: [theta[0].count(), theta[1].count()],
            rho_theta: [rhos.next().expect("two bands"), rhos.next().expect("two bands")],
            h2,
        },
        theta,
    })
}

/// Looks for an orbit whose backward limit is in the upper band's maximal
/// invariant set and forward limit in the lower one's, and certifies that
/// its mixed segment averages vanish.
///
/// `curves` are `Γ₀ > Γ₁ > Γ₂`, all required to be free attracting; the
/// two bands must rotate strictly positively and strictly negatively.
/// Violations are refused with an error. When the grid search or the
/// refinement does not produce a witness the outcome is `Inconclusive`.
pub fn theorem_c_experiment(
    map: &LiftedAnnulusMap,
    curves: &[GraphCurve; 3],
    cfg: &TheoremCConfig,
) -> Result<TheoremCOutcome, BranchError> {
    if cfg.k_schedule.is_empty() || cfg.sweep_max == 0 || cfg.lambda_depth == 0 {
        return Err(BranchError::Config(
            "k schedule, sweep and depth must be nonempty".into(),
        ));
    }
    let Setup {
        m0,
        bands,
        whole,
        gates,
        theta,
    } = gates(map, curves, cfg)?;
    let inconclusive = |stage: &str, reason: String, gates: &Gates, horizon: u64| {
        Ok(TheoremCOutcome::Inconclusive(Box::new(Inconclusive {
            stage: stage.into(),
            reason,
            gates: Some(gates.clone()),
            horizon,
        })))
    };
    let g0 = *theta[0].grid();
    let g1 = *theta[1].grid();
    let lam0 = lambda_escape(map, &bands[0], g0, cfg.lambda_depth, LambdaSide::Unstable)?;
    let lam1 = lambda_escape(map, &bands[1], g1, cfg.lambda_depth, LambdaSide::Stable)?;
    let (lam0, lam1) = (&lam0, &lam1);
    let Some(x) = pick_base(&theta[0], lam0) else {
        return inconclusive(
            "base",
            "upper maximal invariant set misses its unstable set".into(),
            &gates,
            0,
        );
    };
    let Some(y0) = pick_base(&theta[1], lam1) else {
        return inconclusive(
            "base",
            "lower maximal invariant set misses its stable set".into(),
            &gates,
            0,
        );
    };
    let tiles = cfg.tiles.unwrap_or_else(|| default_tiles(m0));
    let b0 = branch_of(lam0, &bands[0], LambdaSide::Unstable, x, tiles, false)?;
    let m1_plus = 2.0 * m0 + 1.0;
    let (placement, y) = if b0.compact && gates.h2.holds {
        let m = b0.extent[1];
        let shift = (m + m1_plus - y0.x).floor() as i64 + 1;
        (
            Placement::Applied { m, m1_plus, shift },
            CoverPoint::new(y0.x + shift as f64, y0.y),
        )
    } else {
        let reason = if gates.h2.holds {
            "unstable branch reaches the window edge".to_string()
        } else {
            format!("(H2) fails at n = {}", gates.h2.first_failure.unwrap_or(0))
        };
        let shift = x.x.floor() as i64 - y0.x.floor() as i64;
        (
            Placement::Skipped { reason },
            CoverPoint::new(y0.x + shift as f64, y0.y),
        )
    };
    let b1 = branch_of(lam1, &bands[1], LambdaSide::Stable, y, tiles, false)?;

    // Non-compact branches are translation invariant; one tile of sources suffices.
    let tg = *b0.region.grid();
    let x_tile = x.x.floor();
    let sources: Vec<usize> = b0
        .region
        .cells()
        .into_iter()
        .filter(|&idx| {
            let (i, j) = tg.coords(idx);
            b0.compact || tg.center(i, j).x.floor() == x_tile
        })
        .collect();
    let target = &b1.region;
    let hits = hit_times(
        map,
        &sources
            .iter()
            .map(|&idx| {
                let (i, j) = tg.coords(idx);
                tg.center(i, j)
            })
            .collect::<Vec<_>>(),
        target,
        &whole,
        cfg.sweep_max,
    );
    let Some(n_star) = hits.iter().flatten().copied().min() else {
        return inconclusive(
            "sweep",
            format!("no intersection of the branches for n ≤ {}", cfg.sweep_max),
            &gates,
            cfg.sweep_max as u64,
        );
    };
    let src = sources[hits
        .iter()
        .position(|h| *h == Some(n_star))
        .expect("minimum is attained")];
    let (ci, cj) = tg.coords(src);
    let (_, _, ya, yb) = tg.rect(ci, cj);
    let column = tg.center(ci, cj).x;

    let h = cfg.survival_horizon;
    // lexicographic: still lands in the stable branch, then survival
    let score = |yv: f64| {
        let p = CoverPoint::new(column, yv);
        if !bands[0].contains(p) {
            return (false, 0);
        }
        let hit = map.iterate(p, n_star as i64).is_some_and(|q| target.contains(q));
        let back = survival(map, &bands[0], p, -1, h);
        let fwd = survival(map, &whole, p, 1, h + n_star as u64);
        (hit, back.min(fwd.saturating_sub(n_star as u64)))
    };
    let (mut lo, mut hi) = (ya, yb);
    // the midpoint of [lo, hi] is the current candidate; unless a half
    // scores strictly better, halve the interval around it
    for _ in 0..cfg.bisection_steps {
        let mid = 0.5 * (lo + hi);
        let here = score(mid);
        let s_lo = score(0.5 * (lo + mid));
        let s_hi = score(0.5 * (mid + hi));
        if here >= s_lo && here >= s_hi {
            let w = 0.25 * (hi - lo);
            (lo, hi) = (mid - w, mid + w);
        } else if s_lo >= s_hi {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let pre = CoverPoint::new(column, 0.5 * (lo + hi));
    let stable0 = lambda_escape(map, &bands[0], g0, cfg.lambda_depth, LambdaSide::Stable)?;
    let blocker = match branch_of(&stable0, &bands[0], LambdaSide::Stable, x, tiles, false) {
        Ok(b) => b.region.union(&b0.region)?,
        Err(_) => b0.region.clone(),
    };
    let gamma1_right = right_part_of_lower_curve(&bands[0], &blocker)?;
    let gamma1_hit = gamma1_right.and_then(|x0| {
        let x1 = tg.x1;
        let count = ((x1 - x0) / tg.dx()).ceil().max(1.0) as usize;
        let pts: Vec<CoverPoint> = (0..count)
            .map(|k| {
                let xv = x0 + (k as f64 + 0.5) * tg.dx();
                CoverPoint::new(xv, bands[0].lower.eval(xv))
            })
            .collect();
        first_hit(map, &pts, target, &whole, cfg.sweep_max)
    });

    let Some(z) = map.iterate(pre, n_star as i64) else {
        return Err(BranchError::NonFinite);
    };
    let surv = [survival(map, &whole, z, -1, h), survival(map, &whole, z, 1, h)];
    let mixed = match mixed_samples(map, &whole, z, m0, &cfg.k_schedule, cfg.orbit_cap) {
        Ok(m) => m,
        Err(reason) => return inconclusive("mixed", reason, &gates, surv[0].min(surv[1])),
    };
    let horizon = mixed.iter().map(|s| s.n_plus.max(s.n_minus)).max().unwrap_or(0);
    let cert = Certificate {
        map: map.name().to_string(),
        m0,
        curves: curves.clone(),
        gates,
        branch_unstable: b0.summary(),
        branch_stable: b1.summary(),
        placement,
        n: n_star,
        column,
        interval: [lo, hi],
        pre_witness: pre,
        witness: z,
        witness_in_branch: target.contains(z),
        gamma1_right,
        gamma1_hit,
        survival: surv,
        horizon,
        mixed,
        tolerance: cfg.tolerance,
        forward_trace: trace(map, z, 1, horizon),
        backward_trace: trace(map, z, -1, horizon),
        unstable_region: b0.region.to_record(),
        stable_region: b1.region.to_record(),
    };
    let problems = cert.check();
    if !problems.is_empty() {
        return inconclusive("certificate", problems.join("; "), &cert.gates, horizon);
    }
    Ok(TheoremCOutcome::Certificate(Box::new(cert)))
}

/// Re-runs the witness orbit and compares it with a certificate: the orbit
/// must stay in `A₀ ∪ A₁` for `|n| ≤ horizon` and reproduce every mixed
/// sample exactly. Returns the list of discrepancies.
pub fn revalidate(map: &LiftedAnnulusMap, cert: &Certificate) -> Vec<String> {
    let mut bad = cert.check();
    let whole = match BandSpec::new(cert.curves[0].clone(), cert.curves[2].clone(), 0) {
        Ok(b) => b,
        Err(e) => return vec![e.to_string()],
    };
    if map.iterate(cert.pre_witness, cert.n as i64) != Some(cert.witness) {
        bad.push("pre-witness does not map to the witness".into());
    }
    for dir in [1, -1] {
        if survival(map, &whole, cert.witness, dir, cert.horizon) < cert.horizon {
            bad.push(format!("orbit in direction {dir} leaves the bands before the horizon"));
        }
    }
    let ks: Vec<u64> = cert.mixed.iter().map(|s| s.k).collect();
    match mixed_samples(map, &whole, cert.witness, cert.m0, &ks, cert.horizon.max(1)) {
        Ok(again) if again == cert.mixed => {}
        Ok(_) => bad.push("mixed samples differ on recomputation".into()),
        Err(e) => bad.push(e),
    }
    bad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapzoo;

    #[test]
    fn drift_band_empties() {
        let map = mapzoo::vertical_drift(-0.1);
        let band = BandSpec::horizontal(1.0, 0.0, 0).unwrap();
        let grid = band.grid(32, 41).unwrap();
        let seq = lambda_sequence(&map, &band, grid, 20, LambdaSide::Unstable).unwrap();
        let counts = seq.counts();
        assert!(counts.windows(2).all(|w| w[1] <= w[0]));
        // images of the band only cover the strip below 1 - n·0.1, up to dilation
        // each step lowers the top by 0.1 and the dilated bounding box gives back at most 2 rows
        let top = seq.regions[5].cells().iter().map(|&i| grid.coords(i).1).max().unwrap();
        assert!(grid.center(0, top).y <= 1.0 - 5.0 * (0.1 - 2.0 * grid.dy()) + 1e-9);
        let esc = lambda_escape(&map, &band, grid, 11, LambdaSide::Unstable).unwrap();
        assert!(esc.is_empty());
    }

    #[test]
    fn twist_band_is_its_own_lambda() {
        let map = mapzoo::twist(1.0);
        let band = BandSpec::horizontal(0.5, -0.5, 0).unwrap();
        let grid = band.grid(32, 33).unwrap();
        for side in [LambdaSide::Unstable, LambdaSide::Stable] {
            let lim = lambda_limit(&map, &band, grid, 10, side).unwrap();
            assert_eq!(lim.conservative, band.region(grid));
            assert_eq!(lim.estimate, band.region(grid));
            assert_eq!(lim.escape_outside, 0);
            assert_eq!(lim.invariance_violations, 0);
            let b = branch_of(&lim.estimate, &band, side, CoverPoint::new(0.3, 0.0), 4, false).unwrap();
            assert!(!b.compact);
            assert!(matches!(
                branch_of(&lim.estimate, &band, side, CoverPoint::new(0.3, 0.0), 4, true),
                Err(BranchError::WindowOverflow { tiles: 4 })
            ));
        }
    }

    #[test]
    fn branch_translates_with_base() {
        let map = mapzoo::tilted_heteroclinic(mapzoo::TiltedHet::default()).unwrap();
        let band = BandSpec::horizontal(1.0, 0.0, 0).unwrap();
        let grid = band.grid(128, 128).unwrap();
        let lam = lambda_escape(&map, &band, grid, 30, LambdaSide::Unstable).unwrap();
        let x = CoverPoint::new(0.25, 0.5);
        let b = branch_of(&lam, &band, LambdaSide::Unstable, x, 6, true).unwrap();
        let bt = branch_of(&lam, &band, LambdaSide::Unstable, x.translate(1), 6, true).unwrap();
        assert_eq!(b.cells, bt.cells);
        assert!((bt.extent[0] - b.extent[0] - 1.0).abs() < 1e-12);
        assert!((bt.extent[1] - b.extent[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn h2_examples() {
        let g0 = GraphCurve::horizontal(1.0);
        let g2 = GraphCurve::horizontal(-1.0);
        let r = h2_check(&mapzoo::identity(), &g0, &g2, 3, 64);
        assert!(!r.holds);
        assert_eq!(r.first_failure, Some(1));
        assert_eq!(r.steps[0].status, H2Status::Above);
        let r = h2_check(&mapzoo::vertical_drift(-0.5), &g0, &g2, 6, 64);
        let st: Vec<H2Status> = r.steps.iter().map(|s| s.status).collect();
        assert_eq!(
            st,
            [
                H2Status::Above,
                H2Status::Above,
                H2Status::Above,
                H2Status::Meets,
                H2Status::Below,
                H2Status::Below
            ]
        );
    }

    #[test]
    fn mixed_sample_on_rigid_rotation_is_refused() {
        // both ends drift right, so the level below p₁(z) is never reached
        let map = mapzoo::rigid_rotation(0.25);
        let band = BandSpec::horizontal(1.0, -1.0, 0).unwrap();
        assert!(mixed_samples(&map, &band, CoverPoint::new(0.0, 0.0), 0.25, &[10], 1000).is_err());
    }
}
