//! Grid regions on the cover and the invariant-set constructions built on
//! them: maximal invariant sets, forward/backward invariant sets, free
//! curves and connected components.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cover::{frac, CoverPoint, LiftedAnnulusMap};

#[derive(Debug, Error, PartialEq)]
pub enum InvError {
    #[error("grid geometry mismatch")]
    GridMismatch,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("f(Cl V) is not inside V: image of cell ({i}, {j}) leaves V")]
    NotAttracting { i: usize, j: usize },
    #[error("curve classification precondition failed: {0}")]
    Classification(String),
    #[error("curves intersect or are not ordered")]
    CurvesCross,
    #[error("region must live on an unwrapped grid")]
    NeedsUnwrapped,
    #[error("malformed region record: {0}")]
    Record(String),
}

/// Rectangle `[x0, x1) × [y0, y1)` cut into `nx × ny` cells. A periodic
/// grid identifies `x` with `x + (x1 - x0)`; it is only used with
/// `x1 - x0 = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
    pub periodic: bool,
}

impl Grid {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize, periodic: bool) -> Result<Self, InvError> {
        if nx == 0 || ny == 0 || !(x0 < x1) || !(y0 < y1) {
            return Err(InvError::InvalidGrid(format!("{nx}x{ny} on [{x0},{x1})x[{y0},{y1})")));
        }
        if periodic && (x1 - x0 - 1.0).abs() > 1e-12 {
            return Err(InvError::InvalidGrid("periodic grids span one unit in x".into()));
        }
        Ok(Grid {
            x0,
            x1,
            y0,
            y1,
            nx,
            ny,
            periodic,
        })
    }

    /// Periodic band `[0, 1) × [y0, y1]` with cell edges on the band edges.
    pub fn band(y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Self, InvError> {
        Grid::new(0.0, 1.0, y0, y1, nx, ny, true)
    }

    /// Periodic band whose first and last cell rows are centered on `y0`
    /// and `y1`, so circles at those heights are sampled exactly.
    pub fn band_centered(y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Self, InvError> {
        if ny < 2 {
            return Err(InvError::InvalidGrid("centered band needs ny >= 2".into()));
        }
        let h = (y1 - y0) / (ny - 1) as f64;
        Grid::new(0.0, 1.0, y0 - 0.5 * h, y1 + 0.5 * h, nx, ny, true)
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        (self.x1 - self.x0) / self.nx as f64
    }

    #[inline]
    pub fn dy(&self) -> f64 {
        (self.y1 - self.y0) / self.ny as f64
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    pub fn center(&self, i: usize, j: usize) -> CoverPoint {
        CoverPoint::new(
            self.x0 + (i as f64 + 0.5) * self.dx(),
            self.y0 + (j as f64 + 0.5) * self.dy(),
        )
    }

    /// Cell rectangle `(xa, xb, ya, yb)`.
    pub fn rect(&self, i: usize, j: usize) -> (f64, f64, f64, f64) {
        let (dx, dy) = (self.dx(), self.dy());
        let xa = self.x0 + i as f64 * dx;
        let ya = self.y0 + j as f64 * dy;
        (xa, xa + dx, ya, ya + dy)
    }

    /// Cell indices of a point, possibly outside the grid.
    #[inline]
    pub fn locate(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.x0) / self.dx()).floor() as i64,
            ((y - self.y0) / self.dy()).floor() as i64,
        )
    }

    /// Brings virtual indices into the grid (wrapping in x when periodic).
    #[inline]
    pub fn normalize(&self, i: i64, j: i64) -> Option<(usize, usize)> {
        if j < 0 || j >= self.ny as i64 {
            return None;
        }
        let i = if self.periodic {
            i.rem_euclid(self.nx as i64)
        } else if i < 0 || i >= self.nx as i64 {
            return None;
        } else {
            i
        };
        Some((i as usize, j as usize))
    }

    pub fn cell_of(&self, p: CoverPoint) -> Option<(usize, usize)> {
        if !p.is_finite() {
            return None;
        }
        let (i, j) = self.locate(p.x, p.y);
        self.normalize(i, j)
    }

    /// Unwrapped grid of `tiles` copies of a periodic grid, starting at
    /// `x = first_tile`.
    pub fn tiled(&self, first_tile: i64, tiles: usize) -> Result<Grid, InvError> {
        if !self.periodic {
            return Err(InvError::InvalidGrid("only periodic grids tile".into()));
        }
        Grid::new(
            first_tile as f64,
            (first_tile + tiles as i64) as f64,
            self.y0,
            self.y1,
            self.nx * tiles,
            self.ny,
            false,
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Occupancy bitset over a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridRegion {
    grid: Grid,
    bits: Vec<u64>,
}

impl GridRegion {
    pub fn empty(grid: Grid) -> Self {
        GridRegion {
            grid,
            bits: vec![0; grid.len().div_ceil(64)],
        }
    }

    pub fn full(grid: Grid) -> Self {
        let mut r = GridRegion::empty(grid);
        for idx in 0..grid.len() {
            r.set_index(idx, true);
        }
        r
    }

    /// Cells whose center satisfies `pred`.
    pub fn from_predicate(grid: Grid, pred: impl Fn(CoverPoint) -> bool) -> Self {
        let mut r = GridRegion::empty(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if pred(grid.center(i, j)) {
                    r.set(i, j, true);
                }
            }
        }
        r
    }

    /// Cells whose center has `y0 ≤ y ≤ y1`.
    pub fn horizontal_strip(grid: Grid, y0: f64, y1: f64) -> Self {
        GridRegion::from_predicate(grid, |p| p.y >= y0 && p.y <= y1)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn get_index(&self, idx: usize) -> bool {
        self.bits[idx >> 6] >> (idx & 63) & 1 == 1
    }

    #[inline]
    pub fn set_index(&mut self, idx: usize, v: bool) {
        if v {
            self.bits[idx >> 6] |= 1 << (idx & 63);
        } else {
            self.bits[idx >> 6] &= !(1 << (idx & 63));
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.get_index(self.grid.index(i, j))
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: bool) {
        let idx = self.grid.index(i, j);
        self.set_index(idx, v);
    }

    /// Occupancy at virtual indices; outside the grid counts as empty.
    #[inline]
    pub fn get_virtual(&self, i: i64, j: i64) -> bool {
        self.grid.normalize(i, j).is_some_and(|(i, j)| self.get(i, j))
    }

    pub fn contains(&self, p: CoverPoint) -> bool {
        self.grid.cell_of(p).is_some_and(|(i, j)| self.get(i, j))
    }

    /// True if some occupied cell lies within `k` cells (Chebyshev) of the
    /// cell containing `p`, which may itself be outside the grid.
    pub fn contains_dilated(&self, p: CoverPoint, k: i64) -> bool {
        if !p.is_finite() {
            return false;
        }
        let (ci, cj) = self.grid.locate(p.x, p.y);
        if k == 0 {
            return self.get_virtual(ci, cj);
        }
        (-k..=k).any(|dj| (-k..=k).any(|di| self.get_virtual(ci + di, cj + dj)))
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&w| w == 0)
    }

    /// Occupied cell indices in increasing (row-major) order.
    pub fn cells(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.count());
        for (w, &word) in self.bits.iter().enumerate() {
            let mut word = word;
            while word != 0 {
                let b = word.trailing_zeros() as usize;
                out.push(w * 64 + b);
                word &= word - 1;
            }
        }
        out
    }

    fn check_same(&self, other: &GridRegion) -> Result<(), InvError> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(InvError::GridMismatch)
        }
    }

    fn zip(&self, other: &GridRegion, op: impl Fn(u64, u64) -> u64) -> Result<GridRegion, InvError> {
        self.check_same(other)?;
        let mut r = GridRegion {
            grid: self.grid,
            bits: self.bits.iter().zip(&other.bits).map(|(&a, &b)| op(a, b)).collect(),
        };
        r.mask_tail();
        Ok(r)
    }

    fn mask_tail(&mut self) {
        let rem = self.grid.len() % 64;
        if rem != 0 {
            if let Some(last) = self.bits.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn intersect(&self, other: &GridRegion) -> Result<GridRegion, InvError> {
        self.zip(other, |a, b| a & b)
    }

    pub fn union(&self, other: &GridRegion) -> Result<GridRegion, InvError> {
        self.zip(other, |a, b| a | b)
    }

    pub fn difference(&self, other: &GridRegion) -> Result<GridRegion, InvError> {
        self.zip(other, |a, b| a & !b)
    }

    pub fn complement(&self) -> GridRegion {
        let mut r = GridRegion {
            grid: self.grid,
            bits: self.bits.iter().map(|&a| !a).collect(),
        };
        r.mask_tail();
        r
    }

    pub fn is_subset(&self, other: &GridRegion) -> Result<bool, InvError> {
        self.check_same(other)?;
        Ok(self.bits.iter().zip(&other.bits).all(|(&a, &b)| a & !b == 0))
    }

    pub fn intersects(&self, other: &GridRegion) -> Result<bool, InvError> {
        self.check_same(other)?;
        Ok(self.bits.iter().zip(&other.bits).any(|(&a, &b)| a & b != 0))
    }

    /// Chebyshev dilation by `k` cells, wrapping in x on periodic grids.
    pub fn dilate(&self, k: usize) -> GridRegion {
        let mut r = self.clone();
        let g = self.grid;
        let k = k as i64;
        for idx in self.cells() {
            let (i, j) = g.coords(idx);
            for dj in -k..=k {
                for di in -k..=k {
                    if let Some((a, b)) = g.normalize(i as i64 + di, j as i64 + dj) {
                        r.set(a, b, true);
                    }
                }
            }
        }
        r
    }

    /// Rows `j0..=j1` of the region (other rows cleared).
    pub fn rows(&self, j0: usize, j1: usize) -> GridRegion {
        let mut r = GridRegion::empty(self.grid);
        for idx in self.cells() {
            let (_, j) = self.grid.coords(idx);
            if j >= j0 && j <= j1 {
                r.set_index(idx, true);
            }
        }
        r
    }

    /// Copies a periodic region onto the tiled grid `tiled`.
    pub fn tile_onto(&self, tiled: Grid) -> Result<GridRegion, InvError> {
        let g = self.grid;
        if !g.periodic || tiled.periodic || tiled.ny != g.ny || !tiled.nx.is_multiple_of(g.nx) {
            return Err(InvError::GridMismatch);
        }
        let mut r = GridRegion::empty(tiled);
        for j in 0..tiled.ny {
            for i in 0..tiled.nx {
                if self.get(i % g.nx, j) {
                    r.set(i, j, true);
                }
            }
        }
        Ok(r)
    }

    /// Shift by `k` cells in x. Periodic grids wrap; unwrapped grids drop
    /// cells pushed off the edge.
    pub fn shift_cells(&self, k: i64) -> GridRegion {
        let mut r = GridRegion::empty(self.grid);
        for idx in self.cells() {
            let (i, j) = self.grid.coords(idx);
            if let Some((a, b)) = self.grid.normalize(i as i64 + k, j as i64) {
                r.set(a, b, true);
            }
        }
        r
    }

    /// Plain PBM (P1) bitmap, top row first.
    pub fn to_pbm(&self) -> String {
        let g = self.grid;
        let mut s = format!("P1\n{} {}\n", g.nx, g.ny);
        for j in (0..g.ny).rev() {
            let row: Vec<&str> = (0..g.nx).map(|i| if self.get(i, j) { "1" } else { "0" }).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    /// Runs `[start, length]` of occupied cells in row-major order.
    pub fn runs(&self) -> Vec<[u32; 2]> {
        let mut out: Vec<[u32; 2]> = Vec::new();
        for idx in self.cells() {
            match out.last_mut() {
                Some(run) if (run[0] + run[1]) as usize == idx => run[1] += 1,
                _ => out.push([idx as u32, 1]),
            }
        }
        out
    }

    pub fn to_record(&self) -> RegionRecord {
        RegionRecord {
            grid: self.grid,
            count: self.count(),
            runs: self.runs(),
        }
    }

    pub fn from_record(rec: &RegionRecord) -> Result<GridRegion, InvError> {
        let mut r = GridRegion::empty(rec.grid);
        for &[start, len] in &rec.runs {
            let end = start as usize + len as usize;
            if end > rec.grid.len() {
                return Err(InvError::Record(format!("run {start}+{len} exceeds grid")));
            }
            for idx in start as usize..end {
                r.set_index(idx, true);
            }
        }
        if r.count() != rec.count {
            return Err(InvError::Record("count does not match runs".into()));
        }
        Ok(r)
    }

    /// Connected components ordered by their least cell index.
    pub fn components(&self, conn: Connectivity) -> Vec<Component> {
        let mut seen = GridRegion::empty(self.grid);
        let mut out = Vec::new();
        for start in self.cells() {
            if seen.get_index(start) {
                continue;
            }
            let c = self.components_from(start, conn);
            for (w, &v) in seen.bits.iter_mut().zip(&c.region.bits) {
                *w |= v;
            }
            out.push(c);
        }
        out
    }

    /// Component containing cell `idx`, if occupied.
    pub fn component_of(&self, idx: usize, conn: Connectivity) -> Option<Component> {
        self.get_index(idx).then(|| self.components_from(idx, conn))
    }

    fn components_from(&self, start: usize, conn: Connectivity) -> Component {
        let g = self.grid;
        let offsets: &[(i64, i64)] = match conn {
            Connectivity::Four => &[(1, 0), (-1, 0), (0, 1), (0, -1)],
            Connectivity::Eight => &[(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)],
        };
        let mut comp = GridRegion::empty(g);
        let mut flags = EdgeFlags::default();
        let mut queue = VecDeque::from([start]);
        comp.set_index(start, true);
        let mut least = start;
        while let Some(idx) = queue.pop_front() {
            least = least.min(idx);
            let (i, j) = g.coords(idx);
            flags.bottom |= j == 0;
            flags.top |= j + 1 == g.ny;
            if !g.periodic {
                flags.left |= i == 0;
                flags.right |= i + 1 == g.nx;
            }
            for &(di, dj) in offsets {
                if let Some((a, b)) = g.normalize(i as i64 + di, j as i64 + dj) {
                    let n = g.index(a, b);
                    if self.get_index(n) && !comp.get_index(n) {
                        comp.set_index(n, true);
                        queue.push_back(n);
                    }
                }
            }
        }
        let cells = comp.count();
        Component {
            region: comp,
            least_cell: least,
            cells,
            flags,
        }
    }
}

/// Which window edges a component touches. Left/right are only set on
/// unwrapped grids.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeFlags {
    pub bottom: bool,
    pub top: bool,
    pub left: bool,
    pub right: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub region: GridRegion,
    pub least_cell: usize,
    pub cells: usize,
    pub flags: EdgeFlags,
}

/// Serialized form of a region: grid plus run-length encoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub grid: Grid,
    pub count: usize,
    pub runs: Vec<[u32; 2]>,
}

/// Per-cell conservative image rectangles `[i0, i1] × [j0, j1]` (virtual,
/// inclusive) of a source grid in a destination grid: the bounding box of
/// the mapped corners and center, dilated by one cell.
#[derive(Clone, Debug)]
pub struct CellImages {
    src: Grid,
    dst: Grid,
    rects: Vec<[i64; 4]>,
}

/// Result of imaging a region: the image restricted to the destination
/// window, and whether any image box was clipped by the window edges.
#[derive(Clone, Debug)]
pub struct ImageResult {
    pub region: GridRegion,
    pub clipped_x: bool,
    pub clipped_y: bool,
    pub non_finite: bool,
}

const NON_FINITE_RECT: [i64; 4] = [i64::MAX, i64::MIN, i64::MAX, i64::MIN];

impl CellImages {
    /// Images of every cell of `src` under `map` (or its inverse when
    /// `backward`), located in `dst`.
    pub fn new(map: &LiftedAnnulusMap, src: Grid, dst: Grid, backward: bool) -> Self {
        let dir = if backward { -1 } else { 1 };
        let rects: Vec<[i64; 4]> = (0..src.ny)
            .into_par_iter()
            .flat_map_iter(|j| {
                (0..src.nx).map(move |i| {
                    let (xa, xb, ya, yb) = src.rect(i, j);
                    let pts = [
                        (xa, ya),
                        (xb, ya),
                        (xa, yb),
                        (xb, yb),
                        (0.5 * (xa + xb), 0.5 * (ya + yb)),
                    ];
                    let mut lo = (f64::INFINITY, f64::INFINITY);
                    let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                    for (x, y) in pts {
                        let q = map.step(CoverPoint::new(x, y), dir);
                        if !q.is_finite() {
                            return NON_FINITE_RECT;
                        }
                        lo = (lo.0.min(q.x), lo.1.min(q.y));
                        hi = (hi.0.max(q.x), hi.1.max(q.y));
                    }
                    let (i0, j0) = dst.locate(lo.0, lo.1);
                    let (i1, j1) = dst.locate(hi.0, hi.1);
                    [i0 - 1, i1 + 1, j0 - 1, j1 + 1]
                })
            })
            .collect();
        CellImages { src, dst, rects }
    }

    pub fn src(&self) -> &Grid {
        &self.src
    }

    pub fn dst(&self) -> &Grid {
        &self.dst
    }

    /// Image rectangle of source cell `idx`, or `None` if the map was not
    /// finite there.
    pub fn rect(&self, idx: usize) -> Option<[i64; 4]> {
        let r = self.rects[idx];
        (r != NON_FINITE_RECT).then_some(r)
    }

    /// Conservative image of `region`. The merge is a bitwise OR, so the
    /// result does not depend on how rayon splits the work.
    pub fn image(&self, region: &GridRegion) -> Result<ImageResult, InvError> {
        if *region.grid() != self.src {
            return Err(InvError::GridMismatch);
        }
        let dst = self.dst;
        let cells = region.cells();
        let (bits, cx, cy, nf) = cells
            .par_chunks(1024)
            .map(|chunk| {
                let mut acc = GridRegion::empty(dst);
                let (mut cx, mut cy, mut nf) = (false, false, false);
                for &idx in chunk {
                    let Some([i0, i1, j0, j1]) = self.rect(idx) else {
                        nf = true;
                        continue;
                    };
                    let (f0, f1) = clip(j0, j1, dst.ny);
                    cy |= f0 != j0 || f1 != j1;
                    if f0 > f1 {
                        continue;
                    }
                    let (g0, g1) = if dst.periodic {
                        if i1 - i0 + 1 >= dst.nx as i64 {
                            (0, dst.nx as i64 - 1)
                        } else {
                            (i0, i1)
                        }
                    } else {
                        let c = clip(i0, i1, dst.nx);
                        cx |= c.0 != i0 || c.1 != i1;
                        c
                    };
                    for j in f0..=f1 {
                        for i in g0..=g1 {
                            if let Some((a, b)) = dst.normalize(i, j) {
                                acc.set(a, b, true);
                            }
                        }
                    }
                }
                (acc.bits, cx, cy, nf)
            })
            .reduce(
                || (GridRegion::empty(dst).bits, false, false, false),
                |a, b| {
                    let bits = a.0.iter().zip(&b.0).map(|(x, y)| x | y).collect();
                    (bits, a.1 | b.1, a.2 | b.2, a.3 | b.3)
                },
            );
        Ok(ImageResult {
            region: GridRegion { grid: dst, bits },
            clipped_x: cx,
            clipped_y: cy,
            non_finite: nf,
        })
    }
}

fn clip(a: i64, b: i64, n: usize) -> (i64, i64) {
    (a.max(0), b.min(n as i64 - 1))
}

/// A 1-periodic graph `θ ↦ g(θ)` sampled at `n` equally spaced nodes and
/// interpolated linearly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphCurve {
    nodes: Vec<f64>,
}

impl GraphCurve {
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self, InvError> {
        if nodes.is_empty() || nodes.iter().any(|v| !v.is_finite()) {
            return Err(InvError::InvalidGrid("curve needs finite nodes".into()));
        }
        Ok(GraphCurve { nodes })
    }

    pub fn horizontal(y: f64) -> Self {
        GraphCurve { nodes: vec![y] }
    }

    pub fn from_fn(n: usize, g: impl Fn(f64) -> f64) -> Result<Self, InvError> {
        GraphCurve::from_nodes((0..n).map(|k| g(k as f64 / n as f64)).collect())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn eval(&self, theta: f64) -> f64 {
        let n = self.nodes.len();
        if n == 1 {
            return self.nodes[0];
        }
        let s = frac(theta) * n as f64;
        let k = (s.floor() as usize).min(n - 1);
        let t = s - k as f64;
        self.nodes[k] * (1.0 - t) + self.nodes[(k + 1) % n] * t
    }

    /// Signed clearance `y - g(x)` of a cover point.
    pub fn clearance(&self, p: CoverPoint) -> f64 {
        p.y - self.eval(p.x)
    }

    pub fn min(&self) -> f64 {
        self.nodes.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.nodes.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Points sampled along the curve over one period.
    pub fn samples(&self, count: usize) -> impl Iterator<Item = CoverPoint> + '_ {
        (0..count).map(move |k| {
            let x = k as f64 / count as f64;
            CoverPoint::new(x, self.eval(x))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveClass {
    NotFree,
    FreeAttracting,
    FreeRepulsing,
    Undecided,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub class: CurveClass,
    /// Smallest `|clearance|` of the image when it lies on one side.
    pub margin: f64,
    pub min_clearance: f64,
    pub max_clearance: f64,
    pub samples: usize,
}

/// Classifies `γ` by where `f(γ)` lies: strictly below is attracting,
/// strictly above is repulsing (then `f⁻¹(γ)` is below). A one-sided
/// image closer than `resolution` is undecided.
pub fn free_curve_classify(map: &LiftedAnnulusMap, curve: &GraphCurve, samples: usize, resolution: f64) -> CurveReport {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut touches = false;
    for p in curve.samples(samples.max(1)) {
        let q = map.forward(p);
        let c = curve.clearance(q);
        let zero = 1e-12 * (1.0 + q.y.abs());
        touches |= c.abs() <= zero;
        lo = lo.min(c);
        hi = hi.max(c);
    }
    let (class, margin) = if touches || (lo < 0.0 && hi > 0.0) {
        (CurveClass::NotFree, 0.0)
    } else if hi < 0.0 {
        let m = -hi;
        (
            if m < resolution {
                CurveClass::Undecided
            } else {
                CurveClass::FreeAttracting
            },
            m,
        )
    } else {
        let m = lo;
        (
            if m < resolution {
                CurveClass::Undecided
            } else {
                CurveClass::FreeRepulsing
            },
            m,
        )
    };
    CurveReport {
        class,
        margin,
        min_clearance: lo,
        max_clearance: hi,
        samples,
    }
}

/// Depth-`N` approximation of a maximal invariant set, with a signed escape
/// time per cell: `0` for surviving or never-member cells, `+n` if the
/// forward orbit of the center left at step `n`, `-n` for the backward one.
#[derive(Clone, Debug)]
pub struct ThetaResult {
    pub region: GridRegion,
    pub escape: Vec<i32>,
    pub horizon: u32,
    pub dilation: i64,
}

fn escape_step(map: &LiftedAnnulusMap, member: &GridRegion, p: CoverPoint, n: u32, dir: i64, dil: i64) -> Option<u32> {
    let mut q = p;
    for k in 1..=n {
        q = map.step(q, dir);
        if !member.contains_dilated(q, dil) {
            return Some(k);
        }
    }
    None
}

/// `Θ_N(A)`: cells of `A` whose center orbit stays in `A` (dilated by
/// `dilation` cells) for `|n| ≤ N` in both directions.
pub fn theta_maximal_with(
    map: &LiftedAnnulusMap,
    a: &GridRegion,
    n: u32,
    dilation: i64,
) -> Result<ThetaResult, InvError> {
    if n == 0 {
        return Err(InvError::ZeroHorizon);
    }
    let g = *a.grid();
    let escape: Vec<i32> = (0..g.ny)
        .into_par_iter()
        .flat_map_iter(|j| {
            (0..g.nx).map(move |i| {
                if !a.get(i, j) {
                    return 0;
                }
                let c = g.center(i, j);
                if let Some(k) = escape_step(map, a, c, n, 1, dilation) {
                    return k as i32;
                }
                match escape_step(map, a, c, n, -1, dilation) {
                    Some(k) => -(k as i32),
                    None => 0,
                }
            })
        })
        .collect();
    let mut region = GridRegion::empty(g);
    for (idx, &e) in escape.iter().enumerate() {
        if e == 0 && a.get_index(idx) {
            region.set_index(idx, true);
        }
    }
    Ok(ThetaResult {
        region,
        escape,
        horizon: n,
        dilation,
    })
}

/// [`theta_maximal_with`] at the default one-cell membership dilation.
pub fn theta_maximal(map: &LiftedAnnulusMap, a: &GridRegion, n: u32) -> Result<ThetaResult, InvError> {
    theta_maximal_with(map, a, n, 1)
}

/// Cells of `a` whose center orbit stays in `a` (dilated by `dilation`
/// cells) for `n` steps in direction `dir` (`+1` forward, `-1` backward).
pub fn one_sided_survivors(map: &LiftedAnnulusMap, a: &GridRegion, n: u32, dir: i64, dilation: i64) -> GridRegion {
    let g = *a.grid();
    let keep: Vec<bool> = (0..g.ny)
        .into_par_iter()
        .flat_map_iter(|j| {
            (0..g.nx).map(move |i| a.get(i, j) && escape_step(map, a, g.center(i, j), n, dir, dilation).is_none())
        })
        .collect();
    let mut r = GridRegion::empty(g);
    for (idx, k) in keep.into_iter().enumerate() {
        if k {
            r.set_index(idx, true);
        }
    }
    r
}

/// Checks `f(Θ_N) ⊆ Θ_{N-1}` up to one dilation cell: for every surviving
/// cell, the cell of `f(center)` (when inside the window) must lie within
/// one cell of `Θ_{N-1}`. Returns the number of violating cells.
pub fn theta_sandwich_violations(map: &LiftedAnnulusMap, theta_n: &GridRegion, theta_prev: &GridRegion) -> usize {
    let g = *theta_n.grid();
    theta_n
        .cells()
        .into_par_iter()
        .filter(|&idx| {
            let (i, j) = g.coords(idx);
            let q = map.forward(g.center(i, j));
            match g.cell_of(q) {
                Some(_) => !theta_prev.contains_dilated(q, 1),
                None => false,
            }
        })
        .count()
}

/// Which window edge is an open end of a half-infinite region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpenEdge {
    Bottom,
    Top,
    None,
}

#[derive(Clone, Debug)]
pub struct ThetaPlusResult {
    pub region: GridRegion,
    /// Occupied cell count after each of the `N` steps.
    pub counts: Vec<usize>,
}

/// Verifies `f(Cl V) ⊂ V` with conservative images; image boxes leaving
/// the window through `open` are accepted since `V` continues there.
pub fn check_attracting(images: &CellImages, v: &GridRegion, open: OpenEdge) -> Result<(), InvError> {
    let g = *v.grid();
    for idx in v.cells() {
        let (i, j) = g.coords(idx);
        let Some([i0, i1, j0, j1]) = images.rect(idx) else {
            return Err(InvError::NotAttracting { i, j });
        };
        if (j1 >= g.ny as i64 && open != OpenEdge::Top) || (j0 < 0 && open != OpenEdge::Bottom) {
            return Err(InvError::NotAttracting { i, j });
        }
        let (f0, f1) = clip(j0, j1, g.ny);
        for jj in f0..=f1 {
            for ii in i0..=i1 {
                match g.normalize(ii, jj) {
                    Some((a, b)) if v.get(a, b) => {}
                    _ => return Err(InvError::NotAttracting { i, j }),
                }
            }
        }
    }
    Ok(())
}

fn theta_one_sided(
    map: &LiftedAnnulusMap,
    v: &GridRegion,
    n: u32,
    open: OpenEdge,
    backward: bool,
) -> Result<ThetaPlusResult, InvError> {
    if n == 0 {
        return Err(InvError::ZeroHorizon);
    }
    let g = *v.grid();
    let images = CellImages::new(map, g, g, backward);
    check_attracting(&images, v, open)?;
    let mut cur = v.clone();
    let mut counts = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let img = images.image(&cur)?.region;
        cur = img.intersect(&cur)?;
        counts.push(cur.count());
    }
    Ok(ThetaPlusResult { region: cur, counts })
}

/// `Θ⁺_N(V) = V ∩ f(V) ∩ … ∩ f^N(V)` for an attracting end neighborhood.
///
/// Orbits entering the window through the open edge are not tracked, so the
/// window should reach past the region where orbits move inward.
pub fn theta_forward(
    map: &LiftedAnnulusMap,
    v: &GridRegion,
    n: u32,
    open: OpenEdge,
) -> Result<ThetaPlusResult, InvError> {
    theta_one_sided(map, v, n, open, false)
}

/// The same construction for `f⁻¹`, i.e. `V` must satisfy `f⁻¹(Cl V) ⊂ V`.
pub fn theta_backward(
    map: &LiftedAnnulusMap,
    v: &GridRegion,
    n: u32,
    open: OpenEdge,
) -> Result<ThetaPlusResult, InvError> {
    theta_one_sided(map, v, n, open, true)
}

/// Cells of `grid` whose center lies between two graphs (inclusive).
pub fn region_between(grid: Grid, lower: &GraphCurve, upper: &GraphCurve) -> GridRegion {
    GridRegion::from_predicate(grid, |p| lower.clearance(p) >= 0.0 && upper.clearance(p) <= 0.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectednessReport {
    pub attracting: CurveReport,
    pub repulsing: CurveReport,
    pub theta_cells: usize,
    pub components: usize,
    pub connected: bool,
}

/// Computes `Θ_N` of the closed annulus between an attracting curve and a
/// repulsing one and counts its components.
pub fn connectedness_check(
    map: &LiftedAnnulusMap,
    attracting: &GraphCurve,
    repulsing: &GraphCurve,
    grid_n: (usize, usize),
    n: u32,
) -> Result<ConnectednessReport, InvError> {
    let (lower, upper) = if attracting.max() < repulsing.min() {
        (attracting, repulsing)
    } else if repulsing.max() < attracting.min() {
        (repulsing, attracting)
    } else {
        return Err(InvError::CurvesCross);
    };
    let pad = 0.05 * (upper.max() - lower.min());
    let grid = Grid::band(lower.min() - pad, upper.max() + pad, grid_n.0, grid_n.1)?;
    let res = grid.dy();
    let ra = free_curve_classify(map, attracting, 4 * grid_n.0, res);
    let rr = free_curve_classify(map, repulsing, 4 * grid_n.0, res);
    if ra.class != CurveClass::FreeAttracting {
        return Err(InvError::Classification(format!(
            "first curve is {:?}, not attracting",
            ra.class
        )));
    }
    if rr.class != CurveClass::FreeRepulsing {
        return Err(InvError::Classification(format!(
            "second curve is {:?}, not repulsing",
            rr.class
        )));
    }
    let a = region_between(grid, lower, upper);
    let theta = theta_maximal(map, &a, n)?;
    let comps = theta.region.components(Connectivity::Four);
    Ok(ConnectednessReport {
        attracting: ra,
        repulsing: rr,
        theta_cells: theta.region.count(),
        components: comps.len(),
        connected: comps.len() == 1,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FreeHorizonMode {
    /// Images compared with `K` itself in the cover.
    Cover,
    /// Images compared with every integer translate of `K`.
    Annulus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FreeHorizon {
    /// Least `n₀` such that the image of `K` avoids `K` for all tested
    /// `n ∈ [n₀, N]`, or `None`.
    pub n0: Option<u32>,
    pub horizon: u32,
    /// Largest tested `n` at which the image still met `K`.
    pub last_return: Option<u32>,
    /// Smallest box gap in cells over `[n₀, N]`.
    pub margin_cells: Option<i64>,
}

/// Finds the least `n₀` with `f̃ⁿ(K) ∩ K = ∅` for `n₀ ≤ n ≤ N`, imaging each
/// cell of `K` by its corners and center under `f̃ⁿ` with one cell of
/// dilation.
pub fn free_horizon(
    map: &LiftedAnnulusMap,
    k: &GridRegion,
    n: u32,
    mode: FreeHorizonMode,
) -> Result<FreeHorizon, InvError> {
    let g = *k.grid();
    if g.periodic {
        return Err(InvError::NeedsUnwrapped);
    }
    if n == 0 {
        return Err(InvError::ZeroHorizon);
    }
    let cells = k.cells();
    let period_cells = (1.0 / g.dx()).round() as i64;
    // gap[n-1] = min Chebyshev gap (cells) between an image box and K, or < 0 on overlap
    let per_cell: Vec<Vec<i64>> = cells
        .par_iter()
        .map(|&idx| {
            let (i, j) = g.coords(idx);
            let (xa, xb, ya, yb) = g.rect(i, j);
            let mut pts = [
                CoverPoint::new(xa, ya),
                CoverPoint::new(xb, ya),
                CoverPoint::new(xa, yb),
                CoverPoint::new(xb, yb),
                CoverPoint::new(0.5 * (xa + xb), 0.5 * (ya + yb)),
            ];
            let mut gaps = Vec::with_capacity(n as usize);
            for _ in 0..n {
                let mut lo = (f64::INFINITY, f64::INFINITY);
                let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                for p in pts.iter_mut() {
                    *p = map.forward(*p);
                    lo = (lo.0.min(p.x), lo.1.min(p.y));
                    hi = (hi.0.max(p.x), hi.1.max(p.y));
                }
                let (i0, j0) = g.locate(lo.0, lo.1);
                let (i1, j1) = g.locate(hi.0, hi.1);
                let rect = [i0 - 1, i1 + 1, j0 - 1, j1 + 1];
                let gap = match mode {
                    FreeHorizonMode::Cover => box_gap(k, rect),
                    FreeHorizonMode::Annulus => {
                        let lo_shift = (-(rect[1] + 1)).div_euclid(period_cells) - 1;
                        let hi_shift = (g.nx as i64 - rect[0]).div_euclid(period_cells) + 1;
                        (lo_shift..=hi_shift)
                            .map(|s| {
                                let d = s * period_cells;
                                box_gap(k, [rect[0] + d, rect[1] + d, rect[2], rect[3]])
                            })
                            .min()
                            .unwrap_or(i64::MAX)
                    }
                };
                gaps.push(gap);
            }
            gaps
        })
        .collect();
    let mut step_gap = vec![i64::MAX; n as usize];
    for gaps in &per_cell {
        for (s, &v) in step_gap.iter_mut().zip(gaps) {
            *s = (*s).min(v);
        }
    }
    let last_return = step_gap.iter().rposition(|&v| v < 0).map(|p| p as u32 + 1);
    let n0 = match last_return {
        Some(r) if r == n => None,
        Some(r) => Some(r + 1),
        None => Some(1),
    };
    let margin_cells = n0.map(|s| step_gap[(s - 1) as usize..].iter().copied().min().unwrap_or(i64::MAX));
    Ok(FreeHorizon {
        n0,
        horizon: n,
        last_return,
        margin_cells,
    })
}

/// Chebyshev gap in cells between a virtual box and the occupied cells of
/// `k`: negative when they overlap.
fn box_gap(k: &GridRegion, rect: [i64; 4]) -> i64 {
    let g = k.grid();
    let mut best = i64::MAX;
    for idx in k.cells() {
        let (i, j) = g.coords(idx);
        let (i, j) = (i as i64, j as i64);
        let gx = if i < rect[0] {
            rect[0] - i
        } else if i > rect[1] {
            i - rect[1]
        } else {
            -1
        };
        let gy = if j < rect[2] {
            rect[2] - j
        } else if j > rect[3] {
            j - rect[3]
        } else {
            -1
        };
        let d = if gx < 0 && gy < 0 { -1 } else { gx.max(gy) - 1 };
        best = best.min(d);
        if best < 0 {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapzoo::{self, SkewHet};

    fn band(y0: f64, y1: f64, n: usize) -> Grid {
        Grid::band(y0, y1, n, n).unwrap()
    }

    #[test]
    fn set_operations_are_exact() {
        let g = band(0.0, 1.0, 13);
        let a = GridRegion::horizontal_strip(g, 0.0, 0.5);
        let b = GridRegion::horizontal_strip(g, 0.3, 1.0);
        let i = a.intersect(&b).unwrap();
        let u = a.union(&b).unwrap();
        assert_eq!(u.count(), g.len());
        assert_eq!(i.count() + u.count(), a.count() + b.count());
        assert_eq!(a.difference(&b).unwrap().union(&i).unwrap(), a);
        assert_eq!(a.complement().complement(), a);
        assert_eq!(a.complement().count(), g.len() - a.count());
        assert!(i.is_subset(&a).unwrap());
        let other = GridRegion::empty(band(0.0, 2.0, 13));
        assert_eq!(a.union(&other), Err(InvError::GridMismatch));
    }

    #[test]
    fn components_examples() {
        let g = band(0.0, 1.0, 32);
        assert_eq!(GridRegion::full(g).components(Connectivity::Four).len(), 1);
        let two = GridRegion::from_predicate(g, |p| p.y < 0.2 || (p.y > 0.5 && p.y < 0.7));
        let comps = two.components(Connectivity::Four);
        assert_eq!(comps.len(), 2);
        assert!(comps[0].flags.bottom && !comps[1].flags.bottom);
        assert!(comps[0].least_cell < comps[1].least_cell);
        // wraps in x
        let wrap = GridRegion::from_predicate(g, |p| p.x < 0.1 || p.x > 0.9);
        assert_eq!(wrap.components(Connectivity::Four).len(), 1);
        // diagonal cells join only with 8-connectivity
        let mut d = GridRegion::empty(g);
        d.set(3, 3, true);
        d.set(4, 4, true);
        assert_eq!(d.components(Connectivity::Four).len(), 2);
        assert_eq!(d.components(Connectivity::Eight).len(), 1);
        let c = d.component_of(g.index(4, 4), Connectivity::Eight).unwrap();
        assert_eq!(c.least_cell, g.index(3, 3));
    }

    #[test]
    fn records_round_trip() {
        let g = band(-1.0, 1.0, 20);
        let r = GridRegion::from_predicate(g, |p| (p.x - 0.5).abs() + p.y.abs() < 0.6);
        let rec = r.to_record();
        assert_eq!(GridRegion::from_record(&rec).unwrap(), r);
        let pbm = r.to_pbm();
        assert!(pbm.starts_with("P1\n20 20\n"));
        assert_eq!(pbm.matches('1').count() - 1, r.count()); // "P1" has one '1'
    }

    #[test]
    fn twist_theta_is_the_band() {
        let tw = mapzoo::twist(2.0);
        let g = band(0.0, 1.0, 64);
        let a = GridRegion::horizontal_strip(g, 0.2, 0.7);
        for n in [1, 10, 50] {
            let t = theta_maximal(&tw, &a, n).unwrap();
            assert_eq!(t.region, a);
        }
    }

    #[test]
    fn drift_theta_empties() {
        let m = mapzoo::vertical_drift(-0.1);
        let g = band(0.0, 1.0, 40);
        let a = GridRegion::full(g);
        let t = theta_maximal(&m, &a, 12).unwrap();
        assert!(t.region.is_empty());
        assert!(t.escape.iter().all(|&e| e > 0 && e <= 12));
        let t = theta_maximal(&m, &a, 3).unwrap();
        assert!(!t.region.is_empty());
    }

    #[test]
    fn free_curve_examples() {
        let tw = mapzoo::twist(2.0);
        let c = GraphCurve::horizontal(0.4);
        assert_eq!(free_curve_classify(&tw, &c, 64, 1e-3).class, CurveClass::NotFree);
        let up = mapzoo::vertical_drift(0.1);
        let r = free_curve_classify(&up, &c, 64, 1e-3);
        assert_eq!(r.class, CurveClass::FreeRepulsing);
        assert!((r.margin - 0.1).abs() < 1e-12);
        let r = free_curve_classify(&up.inverted(), &c, 64, 1e-3);
        assert_eq!(r.class, CurveClass::FreeAttracting);
        assert_eq!(free_curve_classify(&up, &c, 64, 0.5).class, CurveClass::Undecided);
        let het = mapzoo::skew_heteroclinic_reference(SkewHet::default()).unwrap();
        let r = free_curve_classify(&het, &GraphCurve::horizontal(0.0), 64, 1e-3);
        assert_eq!(r.class, CurveClass::FreeAttracting);
        assert!((r.margin - 0.05).abs() < 1e-12);
    }

    #[test]
    fn theta_forward_examples() {
        let drift = mapzoo::vertical_drift(-0.1);
        let g = Grid::band(-3.0, 0.0, 16, 120).unwrap();
        let v = GridRegion::full(g);
        let t = theta_forward(&drift, &v, 70, OpenEdge::Bottom).unwrap();
        assert!(t.region.is_empty());
        assert!(t.counts.windows(2).all(|w| w[1] <= w[0]));
        let e = theta_forward(&mapzoo::identity(), &v, 5, OpenEdge::Bottom).unwrap_err();
        assert!(matches!(e, InvError::NotAttracting { .. }));
    }

    #[test]
    fn free_horizon_examples() {
        let g = Grid::new(0.0, 1.0, 0.0, 1.0, 100, 100, false).unwrap();
        let sq = GridRegion::from_predicate(g, |p| p.x < 0.1 && p.y > 0.45 && p.y < 0.55);
        let rot = mapzoo::rigid_rotation(1.0 / 3.0);
        let cover = free_horizon(&rot, &sq, 9, FreeHorizonMode::Cover).unwrap();
        assert_eq!(cover.n0, Some(1));
        let ann = free_horizon(&rot, &sq, 9, FreeHorizonMode::Annulus).unwrap();
        assert_eq!(ann.n0, None);
        assert_eq!(ann.last_return, Some(9));
        let tw = mapzoo::twist(2.0);
        let k = GridRegion::from_predicate(g, |p| p.x < 0.1 && p.y > 0.2 && p.y < 0.3);
        assert_eq!(free_horizon(&tw, &k, 20, FreeHorizonMode::Cover).unwrap().n0, Some(1));
    }
}
