//! Executes a config and re-validates stored records.

use rotdyn::branches::{self, BandSpec, TheoremCOutcome};
use rotdyn::cover::{rho_n, AnnulusPoint, CoverPoint, LiftedAnnulusMap};
use rotdyn::invsets::{theta_maximal_with, Connectivity, GraphCurve};
use rotdyn::rotset::{self, convergence_table, RotError, RotationSetEstimate};

use crate::config::{Expectation, ExperimentConfig, Operation};
use crate::error::CliError;
use crate::record::{BranchesOutcome, CheckLine, Outcome, ResultRecord, Status, ThetaOutcome};

fn empty_or<T>(r: Result<T, RotError>, wrap: impl FnOnce(T) -> Outcome) -> Result<Outcome, CliError> {
    match r {
        Ok(v) => Ok(wrap(v)),
        Err(e @ (RotError::NoReturningOrbits | RotError::NoInvariantMass)) => {
            Ok(Outcome::Empty { reason: e.to_string() })
        }
        Err(e) => Err(e.into()),
    }
}

fn build_curves<const N: usize>(specs: &[crate::config::CurveSpec; N]) -> Result<[GraphCurve; N], CliError> {
    let v = specs.iter().map(|c| c.build()).collect::<Result<Vec<_>, _>>()?;
    Ok(v.try_into().unwrap_or_else(|_| unreachable!("length is N")))
}

fn compute(map: &LiftedAnnulusMap, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let seed = cfg.seed;
    match &cfg.operation {
        Operation::RhoN { point, n } => {
            let v = rho_n(map, AnnulusPoint::new(point[0], point[1]), *n)?;
            Ok(Outcome::RhoN { value: v })
        }
        Operation::RhoK {
            region,
            m,
            n,
            sampling,
            estimator,
        } => {
            let k = region.region()?;
            empty_or(
                rotset::rho_k(map, &k, *m, *n, &sampling.plan(seed), estimator),
                Outcome::RhoK,
            )
        }
        Operation::RhoLoc {
            schedule,
            m,
            n,
            lattice,
            estimator,
        } => empty_or(
            rotset::rho_local(map, schedule, *m, *n, lattice, estimator),
            Outcome::RhoLoc,
        ),
        Operation::RhoAnn {
            windows,
            m,
            n,
            sampling,
            estimator,
        } => empty_or(
            rotset::rho_ann(map, windows, *m, *n, &sampling.plan(seed), estimator),
            Outcome::RhoAnn,
        ),
        Operation::RhoMes {
            region,
            burn_in,
            length,
            sampling,
            estimator,
        } => {
            let k = region.region()?;
            empty_or(
                rotset::rho_measured(map, &k, *burn_in, *length, &sampling.plan(seed), estimator),
                Outcome::RhoMes,
            )
        }
        Operation::Theta {
            region,
            horizon,
            dilation,
        } => {
            let a = region.region()?;
            let th = theta_maximal_with(map, &a, *horizon, *dilation)?;
            Ok(Outcome::Theta(ThetaOutcome {
                horizon: th.horizon,
                dilation: th.dilation,
                cells: th.region.count(),
                components: th.region.components(Connectivity::Four).len(),
                region: th.region.to_record(),
            }))
        }
        Operation::Branches {
            curves,
            nx,
            ny,
            depth,
            side,
            base,
            tiles,
        } => {
            let [upper, lower] = build_curves(curves)?;
            let band = BandSpec::new(upper.clone(), lower.clone(), 0)?;
            let grid = band.grid(*nx, *ny)?;
            let limit = branches::lambda_limit(map, &band, grid, *depth, *side)?;
            let x = match base {
                Some([x, y]) => CoverPoint::new(*x, *y),
                None => {
                    let Some(&idx) = limit.estimate.cells().first() else {
                        return Err(CliError::Refused(format!(
                            "{side:?} set of the band is empty at depth {depth}"
                        )));
                    };
                    let (i, j) = grid.coords(idx);
                    grid.center(i, j)
                }
            };
            let m0 = map.horizontal_bound();
            let tiles = tiles.unwrap_or_else(|| branches::default_tiles(m0));
            let b = branches::branch_of(&limit.estimate, &band, *side, x, tiles, false)?;
            let nested = limit.counts.windows(2).all(|w| w[1] <= w[0]);
            Ok(Outcome::Branches(BranchesOutcome {
                side: *side,
                curves: [upper, lower],
                depth: *depth,
                m0,
                nested,
                escape_outside: limit.escape_outside,
                conservative_outside: limit.conservative_outside,
                invariance_violations: limit.invariance_violations,
                meets_lower: limit.meets_lower,
                meets_upper: limit.meets_upper,
                diameter: b.diameter(),
                branch: b.summary(),
                limit: limit.estimate.to_record(),
                component: b.region.to_record(),
                counts: limit.counts,
            }))
        }
        Operation::TheoremC { curves, config } => {
            let curves = build_curves(curves)?;
            Ok(Outcome::TheoremC(branches::theorem_c_experiment(map, &curves, config)?))
        }
    }
}

fn expectation_line(e: &Expectation, est: &RotationSetEstimate) -> CheckLine {
    let hull = est
        .hull()
        .map(|h| format!("[{}, {}]", h.lo(), h.hi()))
        .unwrap_or_else(|| "empty".into());
    let (name, pass, detail) = match e {
        Expectation::Interval { gap_tol } => (
            "interval",
            !est.is_empty() && est.is_interval_within(*gap_tol),
            format!("gaps {:?}, tolerance {gap_tol}", est.gaps()),
        ),
        Expectation::Within { lo, hi, tol } => (
            "within",
            !est.is_empty() && est.within(*lo, *hi, *tol),
            format!("hull {hull} vs [{lo}, {hi}] ± {tol}"),
        ),
        Expectation::Contains { value, tol } => {
            let d = est
                .intervals
                .iter()
                .map(|iv| (iv.lo() - value).max(value - iv.hi()).max(0.0))
                .fold(f64::INFINITY, f64::min);
            (
                "contains",
                d <= *tol,
                format!("distance {d} from {value}, tolerance {tol}"),
            )
        }
        Expectation::Hausdorff { lo, hi, tol } => {
            let d = est.hausdorff_to(*lo, *hi);
            (
                "hausdorff",
                d <= *tol,
                format!("distance {d} to [{lo}, {hi}], tolerance {tol}"),
            )
        }
    };
    CheckLine {
        name: name.to_string(),
        pass,
        detail,
    }
}

fn consistency(outcome: &Outcome) -> Vec<CheckLine> {
    let mut out = Vec::new();
    let mut line = |name: &str, pass: bool, detail: String| {
        out.push(CheckLine {
            name: name.to_string(),
            pass,
            detail,
        })
    };
    match outcome {
        Outcome::RhoLoc(l) => {
            let last = &l.levels[l.levels.len() - 1];
            let prev = &l.levels[l.levels.len() - 2];
            line(
                "extrapolated-is-intersection",
                last.intersect(prev) == l.extrapolated,
                "intersection of the two deepest levels".into(),
            );
            line(
                "table-matches-levels",
                convergence_table(&l.levels) == l.table,
                String::new(),
            );
        }
        Outcome::RhoAnn(a) => {
            let mut running: Option<RotationSetEstimate> = None;
            let mut ok = true;
            for (w, level) in a.per_window.iter().zip(&a.levels) {
                running = match (running, w) {
                    (None, Some(r)) => Some(r.estimate.clone()),
                    (Some(p), Some(r)) => Some(p.union(&r.estimate)),
                    (p, None) => p,
                };
                if let Some(r) = &running {
                    ok &= r.intervals == level.intervals;
                }
            }
            line("levels-are-running-unions", ok, String::new());
            line(
                "table-matches-levels",
                convergence_table(&a.levels) == a.table,
                String::new(),
            );
        }
        Outcome::RhoMes(m) => {
            line(
                "hull-matches-estimate",
                m.estimate.hull() == Some(m.hull),
                String::new(),
            );
            line(
                "survivors-at-most-seeds",
                m.survivors <= m.seeds,
                format!("{} of {}", m.survivors, m.seeds),
            );
        }
        Outcome::Branches(b) => {
            line(
                "nested",
                b.nested == b.counts.windows(2).all(|w| w[1] <= w[0]),
                format!("counts {:?}", b.counts),
            );
            line(
                "diameter-matches-extent",
                (b.diameter - (b.branch.extent[1] - b.branch.extent[0])).abs() < 1e-12,
                String::new(),
            );
        }
        Outcome::TheoremC(TheoremCOutcome::Certificate(c)) => {
            let bad = c.check();
            line("certificate", bad.is_empty(), bad.join("; "));
        }
        _ => {}
    }
    out
}

/// Every check a record asserts, recomputed from its stored data.
pub fn evaluate_checks(cfg: &ExperimentConfig, outcome: &Outcome) -> Result<Vec<CheckLine>, CliError> {
    let mut lines = consistency(outcome);
    if !cfg.expect.is_empty() {
        let Some(est) = outcome.final_estimate() else {
            return Err(CliError::Schema(format!(
                "at `expect`: operation {} has no rotation estimate to check",
                cfg.operation.id()
            )));
        };
        lines.extend(cfg.expect.iter().map(|e| expectation_line(e, &est)));
    }
    Ok(lines)
}

fn status_of(outcome: &Outcome, checks: &[CheckLine]) -> Status {
    if matches!(outcome, Outcome::TheoremC(TheoremCOutcome::Inconclusive(_))) {
        Status::Inconclusive
    } else if checks.iter().any(|c| !c.pass) {
        Status::AssertionFailure
    } else {
        Status::Ok
    }
}

pub fn execute(cfg: &ExperimentConfig) -> Result<ResultRecord, CliError> {
    let map = cfg.map.build()?;
    let outcome = compute(&map, cfg)?;
    let checks = evaluate_checks(cfg, &outcome)?;
    let status = status_of(&outcome, &checks);
    Ok(ResultRecord {
        config: cfg.clone(),
        map: map.meta().clone(),
        outcome,
        checks,
        status,
    })
}

/// Result of re-validating a stored record.
#[derive(Debug)]
pub struct Revalidation {
    pub checks: Vec<CheckLine>,
    /// Stored check lines that disagree with the recomputed ones.
    pub mismatches: Vec<String>,
}

impl Revalidation {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty() && self.checks.iter().all(|c| c.pass)
    }
}

/// Re-asserts every inequality of `record` from stored data. With
/// `rerun`, certificates are also re-validated by iterating the map.
pub fn revalidate(record: &ResultRecord, rerun: bool) -> Result<Revalidation, CliError> {
    let mut checks = evaluate_checks(&record.config, &record.outcome)?;
    let mut mismatches = Vec::new();
    if checks.len() != record.checks.len() {
        mismatches.push(format!(
            "record stores {} checks, recomputed {}",
            record.checks.len(),
            checks.len()
        ));
    }
    for (a, b) in checks.iter().zip(&record.checks) {
        if a != b {
            mismatches.push(format!("check `{}` differs from the stored line", a.name));
        }
    }
    if status_of(&record.outcome, &checks) != record.status {
        mismatches.push("stored status differs from the recomputed one".into());
    }
    if rerun {
        if let Outcome::TheoremC(TheoremCOutcome::Certificate(c)) = &record.outcome {
            let map = record.config.map.build()?;
            let bad = branches::revalidate(&map, c);
            checks.push(CheckLine {
                name: "certificate-orbits".into(),
                pass: bad.is_empty(),
                detail: bad.join("; "),
            });
        }
    }
    Ok(Revalidation { checks, mismatches })
}
