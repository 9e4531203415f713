//! Finite-horizon estimators for rotation sets, all producing a common
//! merged interval-union type.

use std::cmp::Ordering;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::cover::{CoverError, CoverPoint, LiftedAnnulusMap};
use crate::invsets::{Grid, GridRegion, InvError};
use crate::mapzoo;

pub const DEFAULT_MERGE_EPS: f64 = 0.01;
pub const DEFAULT_INFINITE_CAP: f64 = 1e3;

#[derive(Debug, Error)]
pub enum RotError {
    #[error("no returning orbits: every seed left the region before a sample was taken")]
    NoReturningOrbits,
    #[error("no invariant mass detected: no seed stayed in the region")]
    NoInvariantMass,
    #[error("need 1 <= m <= N, got m = {m}, N = {n}")]
    Horizon { m: u64, n: u64 },
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Cover(#[from] CoverError),
    #[error(transparent)]
    Region(#[from] InvError),
    #[error(transparent)]
    Zoo(#[from] mapzoo::ZooError),
}

/// Extended real stored as `f64`; `±∞` serialize as the strings `"-inf"`
/// and `"+inf"`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Ext(pub f64);

impl Serialize for Ext {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0 == f64::INFINITY {
            s.serialize_str("+inf")
        } else if self.0 == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Ext {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Ext;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"+inf\"/\"-inf\"")
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Ext, E> {
                Ok(Ext(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Ext, E> {
                Ok(Ext(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Ext, E> {
                Ok(Ext(v as f64))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<Ext, E> {
                match v {
                    "+inf" | "inf" => Ok(Ext(f64::INFINITY)),
                    "-inf" => Ok(Ext(f64::NEG_INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// Closed interval of extended reals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedInterval {
    pub lo: Ext,
    pub hi: Ext,
}

impl ExtendedInterval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi);
        ExtendedInterval {
            lo: Ext(lo),
            hi: Ext(hi),
        }
    }

    pub fn point(v: f64) -> Self {
        ExtendedInterval::new(v, v)
    }

    pub fn lo(&self) -> f64 {
        self.lo.0
    }

    pub fn hi(&self) -> f64 {
        self.hi.0
    }

    pub fn width(&self) -> f64 {
        self.hi() - self.lo()
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo() <= v && v <= self.hi()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InfiniteFlags {
    /// Some sample was below `-cap`.
    pub neg: bool,
    /// Some sample was above `cap`.
    pub pos: bool,
}

/// Sorted, pairwise disjoint intervals separated by more than `merge_eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationSetEstimate {
    pub intervals: Vec<ExtendedInterval>,
    pub sample_count: u64,
    pub horizon: [u64; 2],
    pub merge_eps: f64,
    pub infinite: InfiniteFlags,
}

/// Gaps up to `eps` plus this slack merge, so lattice-spaced samples at
/// exactly `eps` do not split on rounding.
#[inline]
fn merges(gap: f64, eps: f64) -> bool {
    gap <= eps * (1.0 + 1e-9) + 1e-12
}

fn cmp_interval(a: &ExtendedInterval, b: &ExtendedInterval) -> Ordering {
    a.lo().total_cmp(&b.lo()).then(a.hi().total_cmp(&b.hi()))
}

/// Chains sorted values into intervals whose consecutive gaps are `≤ eps`.
fn chain_sorted(values: &[f64], eps: f64, out: &mut Vec<ExtendedInterval>) {
    let mut it = values.iter().copied();
    let Some(first) = it.next() else { return };
    let (mut lo, mut hi) = (first, first);
    for v in it {
        if merges(v - hi, eps) {
            hi = v;
        } else {
            out.push(ExtendedInterval::new(lo, hi));
            lo = v;
            hi = v;
        }
    }
    out.push(ExtendedInterval::new(lo, hi));
}

/// Sorts and merges intervals whose gaps are `≤ eps`. The result equals the
/// chaining of the union of all underlying samples, whatever the input order.
pub fn merge_intervals(mut v: Vec<ExtendedInterval>, eps: f64) -> Vec<ExtendedInterval> {
    v.sort_by(cmp_interval);
    let mut out: Vec<ExtendedInterval> = Vec::with_capacity(v.len());
    for iv in v {
        match out.last_mut() {
            Some(last) if merges(iv.lo() - last.hi(), eps) => {
                if iv.hi() > last.hi() {
                    last.hi = iv.hi;
                }
            }
            _ => out.push(iv),
        }
    }
    out
}

/// Per-seed compression of raw samples: capped values raise flags, the rest
/// is sorted and chained.
#[derive(Clone, Debug, Default)]
struct Bucket {
    intervals: Vec<ExtendedInterval>,
    count: u64,
    flags: InfiniteFlags,
}

impl Bucket {
    fn from_samples(mut values: Vec<f64>, eps: f64, cap: f64) -> Self {
        let mut flags = InfiniteFlags::default();
        let count = values.len() as u64;
        values.retain(|&v| {
            if v > cap {
                flags.pos = true;
                false
            } else if v < -cap {
                flags.neg = true;
                false
            } else {
                true
            }
        });
        values.sort_by(f64::total_cmp);
        let mut intervals = Vec::new();
        chain_sorted(&values, eps, &mut intervals);
        Bucket {
            intervals,
            count,
            flags,
        }
    }

    fn absorb(&mut self, other: Bucket) {
        self.intervals.extend(other.intervals);
        self.count += other.count;
        self.flags.neg |= other.flags.neg;
        self.flags.pos |= other.flags.pos;
    }
}

/// Runs `per_seed` on every seed in parallel. Each call fills `buckets`
/// sample vectors; results are merged per bucket in seed order.
fn sweep<F>(seeds: &[CoverPoint], buckets: usize, eps: f64, cap: f64, per_seed: F) -> Vec<Bucket>
where
    F: Fn(CoverPoint, &mut [Vec<f64>]) + Sync,
{
    let per: Vec<Vec<Bucket>> = seeds
        .par_iter()
        .map(|&z| {
            let mut raw = vec![Vec::new(); buckets];
            per_seed(z, &mut raw);
            raw.into_iter().map(|v| Bucket::from_samples(v, eps, cap)).collect()
        })
        .collect();
    let mut total = vec![Bucket::default(); buckets];
    for seed_buckets in per {
        for (t, b) in total.iter_mut().zip(seed_buckets) {
            t.absorb(b);
        }
    }
    for t in total.iter_mut() {
        t.intervals = merge_intervals(std::mem::take(&mut t.intervals), eps);
    }
    total
}

impl RotationSetEstimate {
    fn from_bucket(b: Bucket, horizon: [u64; 2], eps: f64) -> Self {
        RotationSetEstimate {
            intervals: b.intervals,
            sample_count: b.count,
            horizon,
            merge_eps: eps,
            infinite: b.flags,
        }
    }

    /// Estimate built directly from sample values.
    pub fn from_samples(values: Vec<f64>, horizon: [u64; 2], eps: f64) -> Self {
        RotationSetEstimate::from_bucket(Bucket::from_samples(values, eps, DEFAULT_INFINITE_CAP), horizon, eps)
    }

    pub fn from_intervals(intervals: Vec<ExtendedInterval>, eps: f64) -> Self {
        RotationSetEstimate {
            intervals: merge_intervals(intervals, eps),
            sample_count: 0,
            horizon: [0, 0],
            merge_eps: eps,
            infinite: InfiniteFlags::default(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn is_interval(&self) -> bool {
        self.intervals.len() <= 1
    }

    /// Interval up to gaps of at most `gap_tol`.
    pub fn is_interval_within(&self, gap_tol: f64) -> bool {
        self.gaps().iter().all(|&g| merges(g, gap_tol))
    }

    pub fn gaps(&self) -> Vec<f64> {
        self.intervals.windows(2).map(|w| w[1].lo() - w[0].hi()).collect()
    }

    /// Total length of the gaps inside the hull.
    pub fn gap_measure(&self) -> f64 {
        self.gaps().iter().sum()
    }

    pub fn hull(&self) -> Option<ExtendedInterval> {
        Some(ExtendedInterval {
            lo: self.intervals.first()?.lo,
            hi: self.intervals.last()?.hi,
        })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(v))
    }

    /// Contained in the closed `tol`-neighborhood of `[lo, hi]`.
    pub fn within(&self, lo: f64, hi: f64, tol: f64) -> bool {
        self.hull().is_some_and(|h| h.lo() >= lo - tol && h.hi() <= hi + tol)
    }

    /// Image under `v ↦ q v + p`, merged again at `|q|·merge_eps`.
    pub fn affine(&self, q: f64, p: f64) -> RotationSetEstimate {
        let ivs = self
            .intervals
            .iter()
            .map(|iv| {
                let (a, b) = (q * iv.lo() + p, q * iv.hi() + p);
                ExtendedInterval::new(a.min(b), a.max(b))
            })
            .collect();
        let eps = self.merge_eps * q.abs();
        let infinite = if q < 0.0 {
            InfiniteFlags {
                neg: self.infinite.pos,
                pos: self.infinite.neg,
            }
        } else {
            self.infinite
        };
        RotationSetEstimate {
            intervals: merge_intervals(ivs, eps),
            merge_eps: eps,
            infinite,
            ..self.clone()
        }
    }

    pub fn union(&self, other: &RotationSetEstimate) -> RotationSetEstimate {
        let eps = self.merge_eps.max(other.merge_eps);
        let mut ivs = self.intervals.clone();
        ivs.extend(other.intervals.iter().copied());
        RotationSetEstimate {
            intervals: merge_intervals(ivs, eps),
            sample_count: self.sample_count + other.sample_count,
            horizon: [
                self.horizon[0].min(other.horizon[0]),
                self.horizon[1].max(other.horizon[1]),
            ],
            merge_eps: eps,
            infinite: InfiniteFlags {
                neg: self.infinite.neg | other.infinite.neg,
                pos: self.infinite.pos | other.infinite.pos,
            },
        }
    }

    /// Exact intersection of the two interval unions.
    pub fn intersect(&self, other: &RotationSetEstimate) -> RotationSetEstimate {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        let (a, b) = (&self.intervals, &other.intervals);
        while i < a.len() && j < b.len() {
            let lo = a[i].lo().max(b[j].lo());
            let hi = a[i].hi().min(b[j].hi());
            if lo <= hi {
                out.push(ExtendedInterval::new(lo, hi));
            }
            if a[i].hi() < b[j].hi() {
                i += 1;
            } else {
                j += 1;
            }
        }
        RotationSetEstimate {
            intervals: out,
            sample_count: self.sample_count.min(other.sample_count),
            horizon: self.horizon,
            merge_eps: self.merge_eps.max(other.merge_eps),
            infinite: InfiniteFlags {
                neg: self.infinite.neg & other.infinite.neg,
                pos: self.infinite.pos & other.infinite.pos,
            },
        }
    }

    /// Hausdorff distance between the two interval unions (∞ if exactly one
    /// is empty, 0 if both are).
    pub fn hausdorff(&self, other: &RotationSetEstimate) -> f64 {
        hausdorff(&self.intervals, &other.intervals)
    }

    /// Hausdorff distance to a single interval `[lo, hi]`.
    pub fn hausdorff_to(&self, lo: f64, hi: f64) -> f64 {
        hausdorff(&self.intervals, &[ExtendedInterval::new(lo, hi)])
    }
}

fn dist_to_set(v: f64, set: &[ExtendedInterval]) -> f64 {
    set.iter()
        .map(|iv| {
            if v < iv.lo() {
                iv.lo() - v
            } else if v > iv.hi() {
                v - iv.hi()
            } else {
                0.0
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// `sup_{a ∈ A} d(a, B)`: attained at endpoints of A or at gap midpoints of
/// B lying inside A.
fn directed_hausdorff(a: &[ExtendedInterval], b: &[ExtendedInterval]) -> f64 {
    let mut best: f64 = 0.0;
    for iv in a {
        best = best.max(dist_to_set(iv.lo(), b)).max(dist_to_set(iv.hi(), b));
        for w in b.windows(2) {
            let mid = 0.5 * (w[0].hi() + w[1].lo());
            if iv.contains(mid) {
                best = best.max(dist_to_set(mid, b));
            }
        }
    }
    best
}

pub fn hausdorff(a: &[ExtendedInterval], b: &[ExtendedInterval]) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 0.0,
        (true, false) | (false, true) => f64::INFINITY,
        _ => directed_hausdorff(a, b).max(directed_hausdorff(b, a)),
    }
}

/// Seeds taken from the cells of a region: every `stride`-th cell center in
/// each axis, optionally jittered inside its cell with a recorded seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub stride: usize,
    pub jitter_seed: Option<u64>,
}

impl Default for SamplingPlan {
    fn default() -> Self {
        SamplingPlan {
            stride: 1,
            jitter_seed: None,
        }
    }
}

impl SamplingPlan {
    pub fn seeds(&self, k: &GridRegion) -> Vec<CoverPoint> {
        let g = k.grid();
        let stride = self.stride.max(1);
        k.cells()
            .into_iter()
            .filter(|&idx| {
                let (i, j) = g.coords(idx);
                i % stride == 0 && j % stride == 0
            })
            .map(|idx| {
                let (i, j) = g.coords(idx);
                let c = g.center(i, j);
                match self.jitter_seed {
                    None => c,
                    Some(s) => {
                        // one stream per cell so the result ignores thread order
                        let mut rng = ChaCha8Rng::seed_from_u64(s ^ (idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                        let ox = rng.random_range(-0.5..0.5) * g.dx();
                        let oy = rng.random_range(-0.5..0.5) * g.dy();
                        CoverPoint::new(c.x + ox, c.y + oy)
                    }
                }
            })
            .collect()
    }
}

/// Options shared by the `ρ_K`-type estimators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub merge_eps: f64,
    pub infinite_cap: f64,
    /// Membership of `fⁿ(z)` in `K` is tested on the cell of the projected
    /// point, dilated by this many cells.
    pub membership_dilation: i64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            merge_eps: DEFAULT_MERGE_EPS,
            infinite_cap: DEFAULT_INFINITE_CAP,
            membership_dilation: 0,
        }
    }
}

/// `ρ_K` over `n ∈ [m, N]`, and its tail over `n ∈ [⌈N/2⌉, N]` as the
/// finite stand-in for the intersection over `m`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoK {
    pub estimate: RotationSetEstimate,
    pub tail: RotationSetEstimate,
}

fn check_horizon(m: u64, n: u64) -> Result<(), RotError> {
    if m == 0 || m > n || n > crate::cover::MAX_HORIZON {
        return Err(RotError::Horizon { m, n });
    }
    Ok(())
}

/// Samples `ρ_n(z)` for seeds `z ∈ K` and `n ∈ [m, N]` with `fⁿ(z) ∈ K`.
pub fn rho_k(
    map: &LiftedAnnulusMap,
    k: &GridRegion,
    m: u64,
    n: u64,
    plan: &SamplingPlan,
    opts: &EstimatorOptions,
) -> Result<RhoK, RotError> {
    check_horizon(m, n)?;
    let seeds = plan.seeds(k);
    let tail_from = n.div_ceil(2).max(m);
    let dil = opts.membership_dilation;
    let buckets = sweep(&seeds, 2, opts.merge_eps, opts.infinite_cap, |z, out| {
        let mut p = z;
        for step in 1..=n {
            p = map.forward(p);
            if !p.is_finite() || p.x.abs() > crate::cover::OVERFLOW_GUARD || p.y.abs() > crate::cover::OVERFLOW_GUARD {
                return;
            }
            if step >= m && k.contains_dilated(p, dil) {
                let r = (p.x - z.x) / step as f64;
                out[0].push(r);
                if step >= tail_from {
                    out[1].push(r);
                }
            }
        }
    });
    let mut it = buckets.into_iter();
    let full = it.next().expect("two buckets");
    let tail = it.next().expect("two buckets");
    if full.count == 0 {
        return Err(RotError::NoReturningOrbits);
    }
    Ok(RhoK {
        estimate: RotationSetEstimate::from_bucket(full, [m, n], opts.merge_eps),
        tail: RotationSetEstimate::from_bucket(tail, [tail_from, n], opts.merge_eps),
    })
}

/// Which end of the annulus a neighborhood surrounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndSide {
    /// `y → +∞`; in the plane chart this is the origin.
    Upper,
    /// `y → -∞`.
    Lower,
}

impl EndSide {
    /// Depth coordinate, increasing towards the end.
    #[inline]
    fn depth(self, y: f64) -> f64 {
        match self {
            EndSide::Upper => y,
            EndSide::Lower => -y,
        }
    }
}

/// Seeds on the global lattice `x = (i + ½)/nx`, `depth = k·dy`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticePlan {
    pub nx: usize,
    pub dy: f64,
}

impl LatticePlan {
    /// Lattice points with depth in `(lo, hi]`.
    fn seeds(&self, side: EndSide, lo: f64, hi: f64) -> Vec<CoverPoint> {
        let k0 = (lo / self.dy).floor() as i64;
        let k1 = (hi / self.dy).ceil() as i64;
        let mut out = Vec::new();
        for k in k0..=k1 {
            let s = k as f64 * self.dy;
            if s <= lo || s > hi {
                continue;
            }
            let y = match side {
                EndSide::Upper => s,
                EndSide::Lower => -s,
            };
            for i in 0..self.nx {
                out.push(CoverPoint::new((i as f64 + 0.5) / self.nx as f64, y));
            }
        }
        out
    }
}

/// End neighborhoods `V = {depth > v}` and `W = {depth > w}` with `w > v`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EndWindows {
    pub side: EndSide,
    pub v: f64,
    pub w: f64,
}

fn guard_ok(p: CoverPoint) -> bool {
    p.is_finite() && p.x.abs() <= crate::cover::OVERFLOW_GUARD && p.y.abs() <= crate::cover::OVERFLOW_GUARD
}

/// `ρ_{V,W}`: samples with `z ∉ W`, `fⁿ(z) ∉ W` and `z, …, fⁿ(z) ∈ V`.
pub fn rho_vw(
    map: &LiftedAnnulusMap,
    win: EndWindows,
    m: u64,
    n: u64,
    lattice: &LatticePlan,
    opts: &EstimatorOptions,
) -> Result<RotationSetEstimate, RotError> {
    check_horizon(m, n)?;
    if !(win.w > win.v) {
        return Err(RotError::Schedule(format!(
            "W must lie inside V: need w > v, got v = {}, w = {}",
            win.v, win.w
        )));
    }
    let side = win.side;
    let seeds = lattice.seeds(side, win.v, win.w);
    let b = sweep(&seeds, 1, opts.merge_eps, opts.infinite_cap, |z, out| {
        let mut p = z;
        for step in 1..=n {
            p = map.forward(p);
            if !guard_ok(p) {
                return;
            }
            let s = side.depth(p.y);
            if s <= win.v {
                return;
            }
            if step >= m && s <= win.w {
                out[0].push((p.x - z.x) / step as f64);
            }
        }
    });
    let b = b.into_iter().next().expect("one bucket");
    if b.count == 0 {
        return Err(RotError::NoReturningOrbits);
    }
    Ok(RotationSetEstimate::from_bucket(b, [m, n], opts.merge_eps))
}

/// Nested end neighborhoods `V_k = {depth > start + k·d}`, `d = -ln λ`,
/// `k < depth`. Level `k` unions `ρ_{V_k, W}` over the `inner` thresholds
/// `W_j = {depth > start + (k + j)·d}`, `j = 1..=inner`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiiSchedule {
    pub side: EndSide,
    pub start: f64,
    pub shrink: f64,
    pub depth: usize,
    pub inner: usize,
}

impl RadiiSchedule {
    pub fn step(&self) -> f64 {
        -self.shrink.ln()
    }

    pub fn level(&self, k: usize) -> f64 {
        self.start + k as f64 * self.step()
    }

    fn validate(&self) -> Result<(), RotError> {
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(RotError::Schedule(format!(
                "shrink factor must lie in (0, 1), got {}",
                self.shrink
            )));
        }
        if self.depth < 2 || self.inner < 1 {
            return Err(RotError::Schedule("need depth >= 2 and inner >= 1".into()));
        }
        Ok(())
    }
}

/// One row of a convergence table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub level: usize,
    pub intervals: usize,
    pub sample_count: u64,
    pub hull: Option<ExtendedInterval>,
    pub gap_measure: f64,
    /// Hausdorff distance to the previous level (absent on the first).
    pub hausdorff_prev: Option<f64>,
}

pub fn convergence_table(levels: &[RotationSetEstimate]) -> Vec<ConvergenceRow> {
    levels
        .iter()
        .enumerate()
        .map(|(k, e)| ConvergenceRow {
            level: k,
            intervals: e.intervals.len(),
            sample_count: e.sample_count,
            hull: e.hull(),
            gap_measure: e.gap_measure(),
            hausdorff_prev: (k > 0).then(|| e.hausdorff(&levels[k - 1])),
        })
        .collect()
}

/// True if the gap measure does not increase over the last `last` rows.
pub fn gaps_non_increasing(table: &[ConvergenceRow], last: usize) -> bool {
    let tail = &table[table.len().saturating_sub(last)..];
    tail.windows(2).all(|w| w[1].gap_measure <= w[0].gap_measure + 1e-12)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalEstimate {
    pub schedule: RadiiSchedule,
    pub levels: Vec<RotationSetEstimate>,
    /// Intersection of the two deepest levels.
    pub extrapolated: RotationSetEstimate,
    pub table: Vec<ConvergenceRow>,
    /// The last two levels agree within Hausdorff `merge_eps`.
    pub stabilized: bool,
}

/// `ρ_loc` through a finite radii schedule. All levels are computed from a
/// single sweep over seeds on a global lattice, so deeper levels reuse
/// exactly the same orbits.
pub fn rho_local(
    map: &LiftedAnnulusMap,
    sched: &RadiiSchedule,
    m: u64,
    n: u64,
    lattice: &LatticePlan,
    opts: &EstimatorOptions,
) -> Result<LocalEstimate, RotError> {
    check_horizon(m, n)?;
    sched.validate()?;
    let d = sched.step();
    let side = sched.side;
    let depth = sched.depth;
    let inner = sched.inner as f64;
    let v0 = sched.level(0);
    let top = sched.level(depth - 1) + inner * d;
    let seeds = lattice.seeds(side, v0, top);
    let buckets = sweep(&seeds, depth, opts.merge_eps, opts.infinite_cap, |z, out| {
        let s0 = side.depth(z.y);
        let mut min_s = s0;
        let mut p = z;
        for step in 1..=n {
            p = map.forward(p);
            if !guard_ok(p) {
                return;
            }
            let s = side.depth(p.y);
            min_s = min_s.min(s);
            if min_s <= v0 {
                return;
            }
            if step < m {
                continue;
            }
            let r = (p.x - z.x) / step as f64;
            let max_s = s0.max(s);
            // level k accepts iff v_k < min_s and max_s <= v_k + inner·d
            for (k, bucket) in out.iter_mut().enumerate() {
                let vk = v0 + k as f64 * d;
                if vk >= min_s {
                    break;
                }
                if max_s <= vk + inner * d {
                    bucket.push(r);
                }
            }
        }
    });
    let levels: Vec<RotationSetEstimate> = buckets
        .into_iter()
        .map(|b| RotationSetEstimate::from_bucket(b, [m, n], opts.merge_eps))
        .collect();
    if levels.iter().all(|e| e.sample_count == 0) {
        return Err(RotError::NoReturningOrbits);
    }
    let last = &levels[depth - 1];
    let prev = &levels[depth - 2];
    let extrapolated = last.intersect(prev);
    let stabilized = last.hausdorff(prev) <= opts.merge_eps;
    let table = convergence_table(&levels);
    Ok(LocalEstimate {
        schedule: *sched,
        levels,
        extrapolated,
        table,
        stabilized,
    })
}

/// A band window `[y0, y1]` gridded at `nx × ny`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandWindow {
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
}

impl BandWindow {
    pub fn region(&self) -> Result<GridRegion, RotError> {
        Ok(GridRegion::full(Grid::band(self.y0, self.y1, self.nx, self.ny)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnEstimate {
    pub windows: Vec<BandWindow>,
    /// `ρ_K` of each window; `None` where no orbit returned.
    pub per_window: Vec<Option<RhoK>>,
    /// Running union over windows `0..=k`.
    pub levels: Vec<RotationSetEstimate>,
    pub union: RotationSetEstimate,
    pub table: Vec<ConvergenceRow>,
}

/// `ρ_ann` as the union of `ρ_K` over a growing window schedule, using the
/// full `[m, N]` estimate of each window.
pub fn rho_ann(
    map: &LiftedAnnulusMap,
    windows: &[BandWindow],
    m: u64,
    n: u64,
    plan: &SamplingPlan,
    opts: &EstimatorOptions,
) -> Result<AnnEstimate, RotError> {
    check_horizon(m, n)?;
    if windows.is_empty() {
        return Err(RotError::Schedule("empty window schedule".into()));
    }
    for w in windows.windows(2) {
        if !(w[1].y0 <= w[0].y0 && w[1].y1 >= w[0].y1) {
            return Err(RotError::Schedule("windows must grow".into()));
        }
    }
    let mut per_window = Vec::with_capacity(windows.len());
    let mut levels: Vec<RotationSetEstimate> = Vec::with_capacity(windows.len());
    let empty = RotationSetEstimate {
        intervals: Vec::new(),
        sample_count: 0,
        horizon: [m, n],
        merge_eps: opts.merge_eps,
        infinite: InfiniteFlags::default(),
    };
    for w in windows {
        let r = match rho_k(map, &w.region()?, m, n, plan, opts) {
            Ok(r) => Some(r),
            Err(RotError::NoReturningOrbits) => None,
            Err(e) => return Err(e),
        };
        let prev = levels.last().unwrap_or(&empty);
        let next = match &r {
            Some(r) => prev.union(&r.estimate),
            None => prev.clone(),
        };
        levels.push(next);
        per_window.push(r);
    }
    let union = levels.last().expect("nonempty").clone();
    if union.sample_count == 0 {
        return Err(RotError::NoReturningOrbits);
    }
    let table = convergence_table(&levels);
    Ok(AnnEstimate {
        windows: windows.to_vec(),
        per_window,
        levels,
        union,
        table,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredEstimate {
    pub estimate: RotationSetEstimate,
    pub hull: ExtendedInterval,
    pub survivors: u64,
    pub seeds: u64,
    pub burn_in: u64,
    pub length: u64,
}

/// Birkhoff averages `(p₁fᴮ⁺ᴸz - p₁fᴮz)/L` over seeds whose orbit stays in
/// `K` for all `B + L` steps.
pub fn rho_measured(
    map: &LiftedAnnulusMap,
    k: &GridRegion,
    burn_in: u64,
    length: u64,
    plan: &SamplingPlan,
    opts: &EstimatorOptions,
) -> Result<MeasuredEstimate, RotError> {
    if length == 0 {
        return Err(RotError::Horizon { m: burn_in, n: 0 });
    }
    let seeds = plan.seeds(k);
    let dil = opts.membership_dilation;
    let b = sweep(&seeds, 1, opts.merge_eps, opts.infinite_cap, |z, out| {
        let mut p = z;
        let mut start_x = z.x;
        for step in 1..=burn_in + length {
            p = map.forward(p);
            if !guard_ok(p) || !k.contains_dilated(p, dil) {
                return;
            }
            if step == burn_in {
                start_x = p.x;
            }
        }
        out[0].push((p.x - start_x) / length as f64);
    });
    let b = b.into_iter().next().expect("one bucket");
    if b.count == 0 {
        return Err(RotError::NoInvariantMass);
    }
    let survivors = b.count;
    let estimate = RotationSetEstimate::from_bucket(b, [burn_in, burn_in + length], opts.merge_eps);
    let hull = estimate.hull().expect("nonempty");
    Ok(MeasuredEstimate {
        estimate,
        hull,
        survivors,
        seeds: seeds.len() as u64,
        burn_in,
        length,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineReport {
    pub p: i64,
    pub q: i64,
    pub expected: RotationSetEstimate,
    pub actual: RotationSetEstimate,
    pub hausdorff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Runs `estimator` on the lift of `J^p ∗ I^q` and compares with
/// `q·(estimate of I) + p` in Hausdorff distance, allowing
/// `|q|·merge_eps + tol`.
pub fn affine_law_check<E>(
    map: &LiftedAnnulusMap,
    p: i64,
    q: i64,
    tol: f64,
    estimator: E,
) -> Result<AffineReport, RotError>
where
    E: Fn(&LiftedAnnulusMap) -> Result<RotationSetEstimate, RotError>,
{
    if q == 0 {
        return Err(RotError::Schedule("q must be nonzero".into()));
    }
    let base = estimator(map)?;
    let powered = mapzoo::rigid_rotation_isotopy_power(map, p, q)?;
    let actual = estimator(&powered)?;
    let expected = base.affine(q as f64, p as f64);
    let h = expected.hausdorff(&actual);
    let tolerance = q.unsigned_abs() as f64 * base.merge_eps + tol;
    Ok(AffineReport {
        p,
        q,
        expected,
        actual,
        hausdorff: h,
        tolerance,
        pass: h <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::invsets::Grid;
    use crate::mapzoo::{self, Alpha1D, SkewHet};
    use std::f64::consts::TAU;

    fn est(ivs: &[(f64, f64)]) -> RotationSetEstimate {
        RotationSetEstimate::from_intervals(ivs.iter().map(|&(a, b)| ExtendedInterval::new(a, b)).collect(), 0.01)
    }

    #[test]
    fn merging_and_set_ops() {
        let e = est(&[(0.5, 0.6), (0.0, 0.1), (0.105, 0.2)]);
        assert_eq!(e.intervals.len(), 2);
        assert_eq!(e.intervals[0], ExtendedInterval::new(0.0, 0.2));
        assert!(!e.is_interval());
        assert!(!e.is_interval_within(0.02));
        assert!(e.is_interval_within(0.3));
        assert!((e.gap_measure() - 0.3).abs() < 1e-12);
        let f = est(&[(0.15, 0.55)]);
        let i = e.intersect(&f);
        assert_eq!(
            i.intervals,
            vec![ExtendedInterval::new(0.15, 0.2), ExtendedInterval::new(0.5, 0.55)]
        );
        assert_eq!(e.union(&f).intervals, vec![ExtendedInterval::new(0.0, 0.6)]);
        let a = e.affine(-2.0, 1.0);
        assert!((a.intervals[0].lo() + 0.2).abs() < 1e-15 && a.intervals[0].hi() == 0.0);
        assert!((a.intervals[1].hi() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hausdorff_cases() {
        let a = est(&[(0.0, 1.0)]);
        let b = est(&[(0.0, 0.4), (0.6, 1.0)]);
        assert!((a.hausdorff(&b) - 0.1).abs() < 1e-12);
        assert_eq!(a.hausdorff(&a), 0.0);
        assert!((est(&[(0.0, 0.0)]).hausdorff_to(-1.0, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(a.hausdorff(&est(&[])), f64::INFINITY);
    }

    #[test]
    fn ext_serializes_infinities() {
        let iv = ExtendedInterval {
            lo: Ext(f64::NEG_INFINITY),
            hi: Ext(2.5),
        };
        let s = serde_json::to_string(&iv).unwrap();
        assert_eq!(s, r#"{"lo":"-inf","hi":2.5}"#);
        assert_eq!(serde_json::from_str::<ExtendedInterval>(&s).unwrap(), iv);
    }

    #[test]
    fn rho_k_examples() {
        let g = Grid::band_centered(0.2, 0.7, 16, 51).unwrap();
        let k = GridRegion::full(g);
        let opts = EstimatorOptions::default();
        let r = rho_k(&mapzoo::twist(2.0), &k, 1, 50, &SamplingPlan::default(), &opts).unwrap();
        assert_eq!(r.estimate.intervals.len(), 1);
        let h = r.estimate.hull().unwrap();
        assert!((h.lo() - 0.2).abs() < 1e-12 && (h.hi() - 0.7).abs() < 1e-12);
        let r = rho_k(
            &mapzoo::rigid_rotation(1.0 / 3.0),
            &k,
            1,
            30,
            &SamplingPlan::default(),
            &opts,
        )
        .unwrap();
        assert!(r.estimate.hausdorff_to(1.0 / 3.0, 1.0 / 3.0) < 1e-12);
        let drift = mapzoo::vertical_drift(-1.0);
        let e = rho_k(&drift, &k, 1, 10, &SamplingPlan::default(), &opts).unwrap_err();
        assert!(matches!(e, RotError::NoReturningOrbits));
        assert!(rho_k(&drift, &k, 0, 10, &SamplingPlan::default(), &opts).is_err());
    }

    #[test]
    fn tail_is_nested_in_full() {
        let het = mapzoo::skew_heteroclinic_reference(SkewHet::default()).unwrap();
        let g = Grid::band_centered(-0.5, 0.5, 8, 41).unwrap();
        let r = rho_k(
            &het,
            &GridRegion::full(g),
            1,
            200,
            &SamplingPlan::default(),
            &EstimatorOptions::default(),
        )
        .unwrap();
        assert!(r.tail.sample_count <= r.estimate.sample_count);
        for iv in &r.tail.intervals {
            assert!(r
                .estimate
                .intervals
                .iter()
                .any(|o| o.lo() <= iv.lo() && iv.hi() <= o.hi()));
        }
        assert!(r.estimate.contains(-0.2) && r.estimate.contains(0.3));
    }

    #[test]
    fn remark_values_local() {
        let lattice = LatticePlan { nx: 4, dy: 0.05 };
        let sched = RadiiSchedule {
            side: EndSide::Upper,
            start: 0.0,
            shrink: 0.5,
            depth: 8,
            inner: 2,
        };
        let opts = EstimatorOptions::default();
        for (turns, want) in [(0.0, 0.0), (0.25, 0.25)] {
            let m = mapzoo::plane_linear(0.5, turns).unwrap();
            let r = rho_local(&m, &sched, 1, 1000, &lattice, &opts).unwrap();
            assert!(r.extrapolated.hausdorff_to(want, want) < 1e-12);
            assert!(r.stabilized);
        }
    }

    #[test]
    fn rho_vw_constant_profile() {
        let m = mapzoo::fibred_rotation(Alpha1D::constant(0.37));
        let w = EndWindows {
            side: EndSide::Lower,
            v: 1.0,
            w: 2.0,
        };
        let e = rho_vw(
            &m,
            w,
            1,
            20,
            &LatticePlan { nx: 3, dy: 0.1 },
            &EstimatorOptions::default(),
        )
        .unwrap();
        assert!(e.hausdorff_to(0.37, 0.37) < 1e-12);
        let bad = EndWindows { w: 0.5, ..w };
        assert!(rho_vw(
            &m,
            bad,
            1,
            20,
            &LatticePlan { nx: 3, dy: 0.1 },
            &EstimatorOptions::default()
        )
        .is_err());
    }

    #[test]
    fn sin_profile_local_limit() {
        let m = mapzoo::fibred_rotation(Alpha1D::sin_exp());
        let sched = RadiiSchedule {
            side: EndSide::Upper,
            start: 0.0,
            shrink: 0.5,
            depth: 6,
            inner: 2,
        };
        let r = rho_local(
            &m,
            &sched,
            1,
            4,
            &LatticePlan { nx: 1, dy: 2e-4 },
            &EstimatorOptions::default(),
        )
        .unwrap();
        let lim = 1.0 / TAU;
        assert!(r.extrapolated.hausdorff_to(-lim, lim) < 0.05 / TAU);
    }

    #[test]
    fn measured_twist_hull() {
        let g = Grid::band_centered(0.2, 0.7, 8, 51).unwrap();
        let k = GridRegion::full(g);
        let r = rho_measured(
            &mapzoo::twist(2.0),
            &k,
            10,
            100,
            &SamplingPlan::default(),
            &EstimatorOptions::default(),
        )
        .unwrap();
        assert!((r.hull.lo() - 0.2).abs() < 1e-12 && (r.hull.hi() - 0.7).abs() < 1e-12);
        assert_eq!(r.survivors, r.seeds);
    }

    #[test]
    fn affine_twist() {
        let g = Grid::band_centered(0.2, 0.7, 8, 51).unwrap();
        let k = GridRegion::full(g);
        let estimator = |m: &LiftedAnnulusMap| {
            Ok(rho_k(m, &k, 1, 20, &SamplingPlan::default(), &EstimatorOptions::default())?.estimate)
        };
        let tw = mapzoo::twist(2.0);
        for (p, q, lo, hi) in [(0, 1, 0.2, 0.7), (1, 1, 1.2, 1.7), (0, -1, -0.7, -0.2)] {
            let r = affine_law_check(&tw, p, q, 0.0, estimator).unwrap();
            assert!(r.pass, "{p},{q}: {}", r.hausdorff);
            assert!(
                r.actual.hausdorff_to(lo, hi) < 1e-9,
                "{p},{q}: {:?}",
                r.actual.intervals
            );
        }
    }
}
