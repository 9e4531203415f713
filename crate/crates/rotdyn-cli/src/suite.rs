//! The acceptance suite. Every configuration is pinned here; the
//! single-run ones are also shipped as JSON under `configs/acceptance/`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rotdyn::branches::{self, BandSpec, LambdaSide, TheoremCConfig, TheoremCOutcome};
use rotdyn::cover::{displacement, frac, validate_lift, CoverPoint, LiftedAnnulusMap, Window, TOL_LIFT};
use rotdyn::invsets::{theta_maximal, Grid, GridRegion};
use rotdyn::mapzoo::{self, MapSpec, SkewHet, TiltedHet};
use rotdyn::rotset::{
    self, affine_law_check, gaps_non_increasing, BandWindow, EndSide, EstimatorOptions, LatticePlan, RadiiSchedule,
    RotationSetEstimate, SamplingPlan, DEFAULT_MERGE_EPS,
};
use serde::{Deserialize, Serialize};

use crate::config::{BandRegion, CurveSpec, Expectation, ExperimentConfig, Operation, Sampling};
use crate::error::CliError;
use crate::record::Outcome;
use crate::run;

pub const SUITE_SCHEMA: &str = "rotdyn-suite/1";

/// Gap tolerance of the interval property, `2·merge_eps`.
pub const GAP_TOL: f64 = 2.0 * DEFAULT_MERGE_EPS;
/// Agreement tolerance for conjugacy and measured hulls.
pub const AGREE_TOL: f64 = 0.02;
pub const LIFT_TOL: f64 = 100.0 * TOL_LIFT;
pub const LIFT_POINTS: usize = 1000;
pub const SUITE_SEED: u64 = 0x5eed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteName {
    PaperValues,
    IntervalProps,
    TheoremC,
    Full,
}

impl SuiteName {
    pub fn criteria(self) -> &'static [u8] {
        match self {
            SuiteName::PaperValues => &[1, 2, 3],
            SuiteName::IntervalProps => &[4, 7, 8],
            SuiteName::TheoremC => &[5, 6],
            SuiteName::Full => &[1, 2, 3, 4, 5, 6, 7, 8],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteCheck {
    pub criterion: u8,
    pub id: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema: String,
    pub suite: SuiteName,
    pub passed: bool,
    pub checks: Vec<SuiteCheck>,
}

impl SuiteReport {
    pub fn criterion_passed(&self, c: u8) -> Option<bool> {
        let mut it = self.checks.iter().filter(|k| k.criterion == c).peekable();
        it.peek()?;
        Some(it.all(|k| k.pass))
    }

    /// One JSON line per check, then a summary line.
    pub fn to_jsonl(&self) -> Result<String, CliError> {
        let mut out = String::new();
        for c in &self.checks {
            push_line(&mut out, c)?;
        }
        push_line(
            &mut out,
            &Summary {
                schema: &self.schema,
                suite: self.suite,
                passed: self.passed,
                checks: self.checks.len(),
                failed: self.checks.iter().filter(|c| !c.pass).count(),
            },
        )?;
        Ok(out)
    }
}

#[derive(Serialize)]
struct Summary<'a> {
    schema: &'a str,
    suite: SuiteName,
    passed: bool,
    checks: usize,
    failed: usize,
}

fn push_line<T: Serialize>(out: &mut String, v: &T) -> Result<(), CliError> {
    out.push_str(&serde_json::to_string(v).map_err(|e| CliError::Internal(e.to_string()))?);
    out.push('\n');
    Ok(())
}

/// Wall-clock seconds per criterion; informative, kept out of the report.
pub type Timings = Vec<(u8, f64)>;

struct Ctx {
    checks: Vec<SuiteCheck>,
    criterion: u8,
}

impl Ctx {
    fn check(&mut self, id: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(SuiteCheck {
            criterion: self.criterion,
            id: id.into(),
            pass,
            detail: detail.into(),
        });
    }

    fn fail(&mut self, id: impl Into<String>, err: impl std::fmt::Display) {
        self.check(id, false, format!("error: {err}"));
    }
}

pub fn run_suite(name: SuiteName) -> (SuiteReport, Timings) {
    let mut ctx = Ctx {
        checks: Vec::new(),
        criterion: 0,
    };
    let mut timings = Vec::new();
    for &c in name.criteria() {
        ctx.criterion = c;
        let t = Instant::now();
        match c {
            1 => criterion_1(&mut ctx),
            2 => criterion_2(&mut ctx),
            3 => criterion_3(&mut ctx),
            4 => criterion_4(&mut ctx),
            5 => criterion_5(&mut ctx),
            6 => criterion_6(&mut ctx),
            7 => criterion_7(&mut ctx),
            8 => criterion_8(&mut ctx),
            _ => unreachable!("criteria are 1..=8"),
        }
        timings.push((c, t.elapsed().as_secs_f64()));
    }
    let passed = ctx.checks.iter().all(|c| c.pass);
    (
        SuiteReport {
            schema: SUITE_SCHEMA.to_string(),
            suite: name,
            passed,
            checks: ctx.checks,
        },
        timings,
    )
}

fn cfg(map: MapSpec, op: Operation, expect: Vec<Expectation>) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(map, op, SUITE_SEED);
    c.expect = expect;
    c
}

fn named(name: &str) -> MapSpec {
    MapSpec::by_name(name).expect("zoo name")
}

fn est_opts() -> EstimatorOptions {
    EstimatorOptions {
        merge_eps: DEFAULT_MERGE_EPS,
        infinite_cap: 1e3,
        membership_dilation: 0,
    }
}

fn local_op(start: f64, shrink: f64, depth: usize, dy: f64, n: u64) -> Operation {
    Operation::RhoLoc {
        schedule: RadiiSchedule {
            side: EndSide::Upper,
            start,
            shrink,
            depth,
            inner: 3,
        },
        m: 1,
        n,
        lattice: LatticePlan { nx: 8, dy },
        estimator: est_opts(),
    }
}

/// Windows `[c - h, c + h]` for each half-height, `per` cells per unit height.
fn ann_op(halves: &[f64], nx: usize, per: f64, m: u64, n: u64) -> Operation {
    Operation::RhoAnn {
        windows: halves
            .iter()
            .map(|&h| BandWindow {
                y0: -h,
                y1: h,
                nx,
                ny: (2.0 * h * per).round() as usize,
            })
            .collect(),
        m,
        n,
        sampling: Sampling::default(),
        estimator: est_opts(),
    }
}

fn tilted_curves() -> [f64; 3] {
    let (a, b, c) = TiltedHet::default().levels();
    [a, b, c]
}

fn skew_curves() -> [f64; 3] {
    let l = SkewHet::default().levels;
    [l.y0, l.y1, l.y2]
}

pub fn theorem_c_config() -> TheoremCConfig {
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

fn theorem_c_op(levels: [f64; 3]) -> Operation {
    Operation::TheoremC {
        curves: levels.map(|y| CurveSpec::Horizontal { y }),
        config: theorem_c_config(),
    }
}

/// The zoo with the schedule each map is tested under.
pub fn zoo_cases() -> Vec<(&'static str, Operation)> {
    vec![
        ("identity", ann_op(&[0.5, 1.0, 2.0], 8, 8.0, 1, 200)),
        ("rotation", ann_op(&[0.5, 1.0, 2.0], 8, 8.0, 1, 200)),
        ("twist", ann_op(&[0.5, 1.0, 1.5], 4, 200.0, 1, 200)),
        ("drift", ann_op(&[0.5, 1.0, 2.0], 8, 16.0, 1, 200)),
        ("half", local_op(0.0, 0.5, 8, 0.01, 1000)),
        ("quarter-half", local_op(0.0, 0.5, 8, 0.01, 1000)),
        ("sin-profile", local_op(0.0, 0.8, 8, 2e-4, 50)),
        ("lorentzian", local_op(1.0, 0.5, 8, 1e-3, 50)),
        ("twice-reeb", local_op(0.0, (-1.0f64).exp(), 4, 1.0 / 64.0, 1000)),
        ("double-reeb", ann_op(&[2.0, 4.0, 6.0], 16, 16.0, 1, 2000)),
        ("skew-het", ann_op(&[0.6, 0.8, 1.0], 16, 128.0, 1, 1000)),
        ("skew-het-tilted", ann_op(&[0.5, 0.75, 1.0], 64, 64.0, 1, 400)),
    ]
}

/// Maps and estimators of the conjugacy suite. Maps whose returning
/// segments are all short (drift, the plane contractions, the tilted map)
/// are left out: a conjugator's displacement does not average out over them.
pub fn conjugacy_cases() -> Vec<(&'static str, Operation)> {
    let mut v: Vec<(&'static str, Operation)> = zoo_cases()
        .into_iter()
        .filter(|(n, _)| {
            matches!(
                *n,
                "identity" | "rotation" | "twist" | "sin-profile" | "lorentzian" | "twice-reeb" | "double-reeb"
            )
        })
        .collect();
    v.push(("skew-het", ann_op(&[0.6, 0.8, 1.0], 16, 128.0, 500, 1000)));
    v
}

pub fn conjugators() -> Vec<MapSpec> {
    vec![
        MapSpec::Shear {
            k: 0.1,
            half_width: 50.0,
        },
        MapSpec::RigidRotation { turns: 0.25 },
        MapSpec::FibredRotation {
            profile: mapzoo::ProfileSpec::Lorentzian,
        },
    ]
}

pub const AFFINE_PAIRS: [(i64, i64); 3] = [(1, 1), (-2, 1), (1, -1)];

/// Single-run configurations of criteria 1, 2, 3, 4 and 5, by file stem.
pub fn pinned_configs() -> Vec<(String, ExperimentConfig)> {
    let mut out = vec![(
        "c1-half".to_string(),
        cfg(
            named("half"),
            local_op(0.0, 0.5, 8, 0.01, 1000),
            vec![Expectation::Hausdorff {
                lo: 0.0,
                hi: 0.0,
                tol: 1e-3,
            }],
        ),
    )];
    out.push((
        "c1-quarter-half".to_string(),
        cfg(
            named("quarter-half"),
            local_op(0.0, 0.5, 8, 0.01, 1000),
            vec![Expectation::Hausdorff {
                lo: 0.25,
                hi: 0.25,
                tol: 1e-3,
            }],
        ),
    ));
    out.push((
        "c2-double-reeb".to_string(),
        cfg(
            named("double-reeb"),
            Operation::RhoAnn {
                windows: [2.0, 4.0, 6.0]
                    .iter()
                    .map(|&h| BandWindow {
                        y0: -h,
                        y1: h,
                        nx: 32,
                        ny: (h * 32.0) as usize,
                    })
                    .collect(),
                m: 1,
                n: 10_000,
                sampling: Sampling::default(),
                estimator: est_opts(),
            },
            vec![Expectation::Hausdorff {
                lo: -1.0,
                hi: 1.0,
                tol: 0.05,
            }],
        ),
    ));
    out.push((
        "c2-double-reeb-theta".to_string(),
        cfg(
            named("double-reeb"),
            Operation::Theta {
                region: BandRegion {
                    y0: -6.0,
                    y1: 6.0,
                    nx: 512,
                    ny: 512,
                    centered: false,
                },
                horizon: 10_000,
                dilation: 1,
            },
            Vec::new(),
        ),
    ));
    for k in 0..3 {
        out.push((
            format!("c3-twice-reeb-d{k}"),
            cfg(
                named("twice-reeb"),
                Operation::RhoK {
                    region: BandRegion {
                        y0: k as f64,
                        y1: k as f64 + 1.0,
                        nx: 64,
                        ny: 65,
                        centered: true,
                    },
                    m: 1,
                    n: 1000,
                    sampling: Sampling::default(),
                    estimator: est_opts(),
                },
                vec![Expectation::Contains {
                    value: 0.0,
                    tol: DEFAULT_MERGE_EPS,
                }],
            ),
        ));
    }
    for (name, op) in zoo_cases() {
        out.push((
            format!("c4-{name}"),
            cfg(named(name), op, vec![Expectation::Interval { gap_tol: GAP_TOL }]),
        ));
    }
    out.push((
        "c5-skew-het".to_string(),
        cfg(named("skew-het"), theorem_c_op(skew_curves()), Vec::new()),
    ));
    out.push((
        "c5-skew-het-tilted".to_string(),
        cfg(named("skew-het-tilted"), theorem_c_op(tilted_curves()), Vec::new()),
    ));
    out
}

/// The pinned config stored under `stem`.
pub fn pinned(stem: &str) -> ExperimentConfig {
    pinned_configs()
        .into_iter()
        .find(|(s, _)| s == stem)
        .map(|(_, c)| c)
        .expect("pinned config")
}

/// Runs a pinned config and records its own check lines.
fn run_pinned(ctx: &mut Ctx, stem: &str) -> Option<Outcome> {
    match run::execute(&pinned(stem)) {
        Ok(rec) => {
            for c in &rec.checks {
                ctx.check(format!("{stem}/{}", c.name), c.pass, c.detail.clone());
            }
            Some(rec.outcome)
        }
        Err(e) => {
            ctx.fail(stem, e);
            None
        }
    }
}

fn criterion_1(ctx: &mut Ctx) {
    run_pinned(ctx, "c1-half");
    run_pinned(ctx, "c1-quarter-half");
}

fn criterion_2(ctx: &mut Ctx) {
    run_pinned(ctx, "c2-double-reeb");
    if let Some(Outcome::Theta(t)) = run_pinned(ctx, "c2-double-reeb-theta") {
        ctx.check(
            "c2-double-reeb-theta/no-invariant-cells",
            t.cells == 0,
            format!("{} cells with full orbit in |y| <= 6", t.cells),
        );
    }
}

/// Smallest annulus displacement `max(|Δθ mod 1|, |Δy|)` over cell centers.
fn min_displacement(map: &LiftedAnnulusMap, g: Grid) -> f64 {
    (0..g.len())
        .map(|idx| {
            let (i, j) = g.coords(idx);
            let c = g.center(i, j);
            let q = map.forward(c);
            let dx = (frac(q.x - c.x + 0.5) - 0.5).abs();
            dx.max((q.y - c.y).abs())
        })
        .fold(f64::INFINITY, f64::min)
}

fn criterion_3(ctx: &mut Ctx) {
    let map = match named("twice-reeb").build() {
        Ok(m) => m,
        Err(e) => return ctx.fail("c3-twice-reeb", e),
    };
    for k in 0..3 {
        let stem = format!("c3-twice-reeb-d{k}");
        let out = run_pinned(ctx, &stem);
        if let Some(Outcome::RhoK(r)) = out {
            let holds = r.estimate.intervals.iter().any(|iv| iv.lo() <= 0.0 && iv.hi() >= 0.0);
            ctx.check(
                format!("{stem}/interval-through-0"),
                holds,
                format!("{} intervals, hull {:?}", r.estimate.intervals.len(), r.estimate.hull()),
            );
        }
        let g = match pinned(&stem).operation {
            Operation::RhoK { region, .. } => region.grid(),
            _ => unreachable!("c3 configs are rho-k"),
        };
        match g {
            Ok(g) => {
                let d = min_displacement(&map, g);
                ctx.check(format!("{stem}/min-displacement"), d > 1e-3, format!("{d:.6e} > 1e-3"));
            }
            Err(e) => ctx.fail(format!("{stem}/min-displacement"), e),
        }
    }
}

/// Final estimate and convergence table of a zoo schedule.
fn zoo_estimate(
    map: &LiftedAnnulusMap,
    op: &Operation,
) -> Result<(RotationSetEstimate, Vec<rotset::ConvergenceRow>), CliError> {
    match op {
        Operation::RhoAnn {
            windows,
            m,
            n,
            sampling,
            estimator,
        } => {
            let a = rotset::rho_ann(map, windows, *m, *n, &sampling.plan(SUITE_SEED), estimator)?;
            Ok((a.union, a.table))
        }
        Operation::RhoLoc {
            schedule,
            m,
            n,
            lattice,
            estimator,
        } => {
            let l = rotset::rho_local(map, schedule, *m, *n, lattice, estimator)?;
            let last = l.levels.last().cloned().expect("depth >= 2");
            Ok((last, l.table))
        }
        _ => Err(CliError::Internal("zoo schedules are rho-ann or rho-loc".into())),
    }
}

fn criterion_4(ctx: &mut Ctx) {
    for (name, op) in zoo_cases() {
        let id = format!("c4-{name}");
        let res = named(name)
            .build()
            .map_err(CliError::from)
            .and_then(|m| zoo_estimate(&m, &op));
        match res {
            Ok((est, table)) => {
                ctx.check(
                    format!("{id}/interval"),
                    !est.is_empty() && est.is_interval_within(GAP_TOL),
                    format!("hull {:?}, gaps {:?}", est.hull().map(|h| [h.lo(), h.hi()]), est.gaps()),
                );
                let gaps: Vec<f64> = table.iter().map(|r| r.gap_measure).collect();
                ctx.check(
                    format!("{id}/gaps-non-increasing"),
                    table.len() >= 3 && gaps_non_increasing(&table, 3),
                    format!("gap measures {gaps:?}"),
                );
            }
            Err(e) => ctx.fail(id, e),
        }
    }
}

fn theorem_c_outcome(ctx: &mut Ctx, stem: &str) -> Option<(LiftedAnnulusMap, Box<branches::Certificate>)> {
    let map = match pinned(stem).map.build() {
        Ok(m) => m,
        Err(e) => {
            ctx.fail(stem, e);
            return None;
        }
    };
    match run_pinned(ctx, stem) {
        Some(Outcome::TheoremC(TheoremCOutcome::Certificate(c))) => {
            ctx.check(
                format!("{stem}/found"),
                true,
                format!("n = {}, placement {:?}", c.n, c.placement),
            );
            Some((map, c))
        }
        Some(Outcome::TheoremC(TheoremCOutcome::Inconclusive(i))) => {
            ctx.check(
                format!("{stem}/found"),
                false,
                format!("inconclusive at {}: {}", i.stage, i.reason),
            );
            None
        }
        _ => None,
    }
}

fn criterion_5(ctx: &mut Ctx) {
    if let Some((map, c)) = theorem_c_outcome(ctx, "c5-skew-het") {
        let strictly = |e: &RotationSetEstimate, lo: f64, hi: f64| e.hull().is_some_and(|h| h.lo() > lo && h.hi() < hi);
        let [r0, r1] = &c.gates.rho_theta;
        ctx.check(
            "c5-skew-het/rho-theta-upper",
            strictly(r0, 0.25, 0.35),
            format!("hull {:?} in (0.25, 0.35)", r0.hull().map(|h| [h.lo(), h.hi()])),
        );
        ctx.check(
            "c5-skew-het/rho-theta-lower",
            strictly(r1, -0.25, -0.15),
            format!("hull {:?} in (-0.25, -0.15)", r1.hull().map(|h| [h.lo(), h.hi()])),
        );
        let at_k = c.mixed.iter().find(|s| s.k == 1000);
        ctx.check(
            "c5-skew-het/mixed-average-k1000",
            at_k.is_some_and(|s| s.average.abs() <= 0.02),
            format!("{:?}", at_k.map(|s| s.average)),
        );
        let bad = branches::revalidate(&map, &c);
        ctx.check("c5-skew-het/revalidate", bad.is_empty(), bad.join("; "));
    }
    if let Some((map, c)) = theorem_c_outcome(ctx, "c5-skew-het-tilted") {
        ctx.check("c5-skew-het-tilted/n-at-most-200", c.n <= 200, format!("n = {}", c.n));
        let at_k = c.mixed.iter().find(|s| s.k == 1000);
        ctx.check(
            "c5-skew-het-tilted/mixed-average-k1000",
            at_k.is_some_and(|s| s.average.abs() <= 0.02),
            format!("{:?}", at_k.map(|s| s.average)),
        );
        let bad = branches::revalidate(&map, &c);
        ctx.check("c5-skew-het-tilted/revalidate", bad.is_empty(), bad.join("; "));
    }
}

/// Grid and depth of the structure suite.
pub const C6_GRID: usize = 256;
pub const C6_DEPTH: u32 = 50;

fn criterion_6(ctx: &mut Ctx) {
    let map = match named("skew-het-tilted").build() {
        Ok(m) => m,
        Err(e) => return ctx.fail("c6", e),
    };
    let [y0, y1, y2] = tilted_curves();
    let h2 = branches::h2_check(
        &map,
        &rotdyn::invsets::GraphCurve::horizontal(y0),
        &rotdyn::invsets::GraphCurve::horizontal(y2),
        50,
        4096,
    );
    ctx.check("c6/h2-holds", h2.holds, format!("first failure {:?}", h2.first_failure));
    let m0 = map.horizontal_bound();
    let bands = [
        (BandSpec::horizontal(y0, y1, 0), LambdaSide::Unstable, "a0-unstable"),
        (BandSpec::horizontal(y1, y2, 1), LambdaSide::Stable, "a1-stable"),
    ];
    for (band, side, label) in bands {
        let band = match band {
            Ok(b) => b,
            Err(e) => {
                ctx.fail(format!("c6/{label}"), e);
                continue;
            }
        };
        if let Err(e) = structure(ctx, &map, &band, side, label, m0) {
            ctx.fail(format!("c6/{label}"), e);
        }
    }
}

fn structure(
    ctx: &mut Ctx,
    map: &LiftedAnnulusMap,
    band: &BandSpec,
    side: LambdaSide,
    label: &str,
    m0: f64,
) -> Result<(), CliError> {
    let grid = band.grid(C6_GRID, C6_GRID)?;
    let limit = branches::lambda_limit(map, band, grid, C6_DEPTH, side)?;
    let nested = limit.counts.windows(2).all(|w| w[1] <= w[0]);
    ctx.check(
        format!("c6/{label}/conservative-nested"),
        nested,
        format!("first {:?} last {:?}", limit.counts.first(), limit.counts.last()),
    );
    let mut prev = band.region(grid);
    let mut escape_nested = true;
    for n in 1..=C6_DEPTH {
        let e = branches::lambda_escape(map, band, grid, n, side)?;
        escape_nested &= e.is_subset(&prev)?;
        prev = e;
    }
    ctx.check(
        format!("c6/{label}/escape-nested"),
        escape_nested,
        format!("n <= {C6_DEPTH}"),
    );
    let (meets, curve) = match side {
        LambdaSide::Unstable => (limit.meets_lower, "lower"),
        LambdaSide::Stable => (limit.meets_upper, "upper"),
    };
    ctx.check(
        format!("c6/{label}/meets-{curve}-curve"),
        meets,
        format!("{} cells", limit.estimate.count()),
    );
    ctx.check(
        format!("c6/{label}/invariance"),
        limit.invariance_violations == 0,
        format!("{} cells map more than one cell outside", limit.invariance_violations),
    );
    ctx.check(
        format!("c6/{label}/escape-inside-conservative"),
        limit.escape_outside == 0,
        format!("{} cells", limit.escape_outside),
    );
    // every branch through a cell of the first tile
    let bound = 2.0 * m0 + 1.0 + 2.0 * grid.dx();
    let tiles = branches::default_tiles(m0);
    let mut worst: f64 = 0.0;
    let mut all_compact = true;
    let mut count = 0;
    let mut seen = GridRegion::empty(grid);
    for idx in limit.estimate.cells() {
        if seen.get_index(idx) {
            continue;
        }
        let (i, j) = grid.coords(idx);
        let b = branches::branch_of(&limit.estimate, band, side, grid.center(i, j), tiles, false)?;
        count += 1;
        all_compact &= b.compact;
        worst = worst.max(b.diameter());
        // mark the branch's cells in the base tile, reduced mod 1
        let tiled = *b.region.grid();
        for c in b.region.cells() {
            let (ti, tj) = tiled.coords(c);
            seen.set(ti % grid.nx, tj, true);
        }
    }
    ctx.check(
        format!("c6/{label}/branches-compact"),
        all_compact,
        format!("{count} branches meet the base tile"),
    );
    ctx.check(
        format!("c6/{label}/branch-diameter"),
        all_compact && worst <= bound,
        format!("max diameter {worst:.4} <= {bound:.4}"),
    );
    Ok(())
}

fn hull_hausdorff(a: &RotationSetEstimate, b: &RotationSetEstimate) -> f64 {
    match (a.hull(), b.hull()) {
        (Some(x), Some(y)) => (x.lo() - y.lo()).abs().max((x.hi() - y.hi()).abs()),
        _ => f64::INFINITY,
    }
}

/// Band estimate, measured hull over the band, and measured hull over Θ.
struct HullCase {
    map: &'static str,
    label: &'static str,
    region: BandRegion,
    horizon: u64,
    burn_in: u64,
    length: u64,
    theta_horizon: u32,
}

pub const C7_TAIL_HORIZON: u64 = 1000;

fn c7_cases() -> Vec<HullCase> {
    let band = |y0: f64, y1: f64, nx: usize, ny: usize| BandRegion {
        y0,
        y1,
        nx,
        ny,
        centered: true,
    };
    vec![
        HullCase {
            map: "twist",
            label: "band",
            region: band(-1.0, 1.0, 8, 201),
            horizon: 400,
            burn_in: 100,
            length: 400,
            theta_horizon: 200,
        },
        HullCase {
            map: "skew-het",
            label: "band",
            region: band(-1.0, 1.0, 16, 257),
            horizon: C7_TAIL_HORIZON,
            burn_in: 500,
            length: 1000,
            theta_horizon: 200,
        },
        HullCase {
            map: "skew-het",
            label: "upper",
            region: band(0.0, 1.0, 16, 129),
            horizon: C7_TAIL_HORIZON,
            burn_in: 500,
            length: 1000,
            theta_horizon: 200,
        },
        HullCase {
            map: "skew-het",
            label: "lower",
            region: band(-1.0, 0.0, 16, 129),
            horizon: C7_TAIL_HORIZON,
            burn_in: 500,
            length: 1000,
            theta_horizon: 200,
        },
    ]
}

fn criterion_7(ctx: &mut Ctx) {
    for case in c7_cases() {
        let id = format!("c7-{}-{}", case.map, case.label);
        if let Err(e) = hull_case(ctx, &id, &case) {
            ctx.fail(id, e);
        }
    }
}

fn hull_case(ctx: &mut Ctx, id: &str, case: &HullCase) -> Result<(), CliError> {
    let map = named(case.map).build()?;
    let k = case.region.region()?;
    let opts = est_opts();
    let plan = SamplingPlan::default();
    let rk = rotset::rho_k(&map, &k, case.horizon / 2, case.horizon, &plan, &opts)?;
    let measured = rotset::rho_measured(&map, &k, case.burn_in, case.length, &plan, &opts)?;
    let d = hull_hausdorff(&rk.tail, &measured.estimate);
    ctx.check(
        format!("{id}/conv-vs-measured"),
        d <= AGREE_TOL,
        format!(
            "conv {:?} measured {:?} distance {d:.4e}",
            rk.tail.hull().map(|h| [h.lo(), h.hi()]),
            [measured.hull.lo(), measured.hull.hi()]
        ),
    );
    let theta = theta_maximal(&map, &k, case.theta_horizon)?;
    let on_theta = rotset::rho_measured(&map, &theta.region, case.burn_in, case.length, &plan, &opts)?;
    let h = on_theta.hull;
    ctx.check(
        format!("{id}/band-in-theta-hull"),
        rk.tail.within(h.lo(), h.hi(), AGREE_TOL),
        format!(
            "band {:?} theta hull [{}, {}] ({} cells)",
            rk.tail.hull().map(|h| [h.lo(), h.hi()]),
            h.lo(),
            h.hi(),
            theta.region.count()
        ),
    );
    Ok(())
}

fn criterion_8(ctx: &mut Ctx) {
    for (name, op) in zoo_cases() {
        let map = match named(name).build() {
            Ok(m) => m,
            Err(e) => {
                ctx.fail(format!("c8-{name}"), e);
                continue;
            }
        };
        for (p, q) in AFFINE_PAIRS {
            let id = format!("c8-{name}/affine({p},{q})");
            let est = |m: &LiftedAnnulusMap| zoo_estimate(m, &op).map(|x| x.0).map_err(|e| e.to_string());
            // the library check wants a RotError; carry the message through
            let res = affine_law_check(&map, p, q, 0.0, |m| est(m).map_err(rotset::RotError::Schedule));
            match res {
                Ok(r) => ctx.check(id, r.pass, format!("hausdorff {:.3e} <= {}", r.hausdorff, r.tolerance)),
                Err(e) => ctx.fail(id, e),
            }
        }
        lift_laws(ctx, name, &map);
    }
    for (name, op) in conjugacy_cases() {
        let res = named(name).build().map_err(CliError::from).and_then(|map| {
            let base = zoo_estimate(&map, &op)?.0;
            let mut out = Vec::new();
            for h in conjugators() {
                let h = h.build()?;
                let c = mapzoo::conjugate(&map, &h);
                let e = zoo_estimate(&c, &op)?.0;
                out.push((h.name().to_string(), e.hausdorff(&base)));
            }
            Ok(out)
        });
        match res {
            Ok(v) => {
                for (h, d) in v {
                    ctx.check(
                        format!("c8-{name}/conjugate[{h}]"),
                        d <= AGREE_TOL,
                        format!("hausdorff {d:.3e} <= {AGREE_TOL}"),
                    );
                }
            }
            Err(e) => ctx.fail(format!("c8-{name}/conjugate"), e),
        }
    }
}

/// Lift equivariance `f(z + 1) = f(z) + 1`, inverse consistency and the
/// cocycle identity `d(z, a + b) = d(z, a) + d(fᵃz, b)`.
fn lift_laws(ctx: &mut Ctx, name: &str, map: &LiftedAnnulusMap) {
    let (lo, hi) = map.band();
    let (y0, y1) = (lo.max(-3.0), hi.min(3.0));
    let id = format!("c8-{name}/lift");
    match validate_lift(map, Window::new(-2.0, 2.0, y0, y1), LIFT_POINTS, LIFT_TOL) {
        Ok(r) => ctx.check(
            id,
            true,
            format!(
                "equivariance {:.2e}, inverse {:.2e} <= {LIFT_TOL:.0e}",
                r.max_equivariance_error, r.max_inverse_error
            ),
        ),
        Err(e) => ctx.fail(id, e),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    let mut worst: f64 = 0.0;
    let mut tested = 0;
    for _ in 0..LIFT_POINTS {
        let z = CoverPoint::new(rng.random_range(-2.0..2.0), rng.random_range(y0..y1));
        let a: i64 = rng.random_range(-6..=6);
        let b: i64 = rng.random_range(-6..=6);
        let (Ok(whole), Ok(first)) = (displacement(map, z, a + b), displacement(map, z, a)) else {
            continue;
        };
        let Ok(second) = displacement(map, first.end, b) else {
            continue;
        };
        tested += 1;
        worst = worst.max((whole.displacement - first.displacement - second.displacement).abs());
    }
    ctx.check(
        format!("c8-{name}/cocycle"),
        tested > 0 && worst <= LIFT_TOL,
        format!("max error {worst:.2e} over {tested} points"),
    );
}

/// Sub-criterion lookup used by the CLI to list what a suite covers.
pub fn describe(c: u8) -> &'static str {
    match c {
        1 => "local rotation of z/2 and (i/2)z",
        2 => "annular rotation of the double-Reeb map",
        3 => "twice-Reeb bands contain 0",
        4 => "interval property on the zoo",
        5 => "heteroclinic certificates",
        6 => "unstable and stable set structure",
        7 => "measured hulls",
        8 => "affine, conjugacy and lift laws",
        9 => "determinism",
        _ => "",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_configs_match() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/acceptance");
        for (stem, cfg) in pinned_configs() {
            let path = dir.join(format!("{stem}.json"));
            let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            let shipped = crate::config::parse_config(&text).unwrap();
            assert_eq!(shipped, cfg, "{stem}");
        }
    }

    #[test]
    fn suites_cover_criteria() {
        assert_eq!(SuiteName::Full.criteria().len(), 8);
        let mut parts: Vec<u8> = [SuiteName::PaperValues, SuiteName::IntervalProps, SuiteName::TheoremC]
            .iter()
            .flat_map(|s| s.criteria().iter().copied())
            .collect();
        parts.sort();
        assert_eq!(parts, SuiteName::Full.criteria());
    }
}
