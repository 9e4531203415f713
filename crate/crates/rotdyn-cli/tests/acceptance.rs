//! Acceptance criteria 1 to 9, one verdict line each. Runs without the
//! libtest harness so the verdicts are always printed.
//!
//! Criteria 1 to 8 come from `suite full`, run in-process on one worker.
//! Criterion 5 is additionally cross-checked against an independent
//! iteration of the radial factor, and criterion 9 re-runs the suite on one
//! and on eight workers and compares the serialized reports byte for byte.

use std::time::Instant;

use rotdyn::branches::{Certificate, TheoremCOutcome};
use rotdyn_cli::record::Outcome;
use rotdyn_cli::run;
use rotdyn_cli::suite::{self, SuiteName, SuiteReport};

/// Wall-clock targets in seconds, per criterion.
fn target_s(c: u8) -> Option<f64> {
    match c {
        1 => Some(10.0),
        2 => Some(120.0),
        3 => Some(120.0),
        4 => Some(300.0),
        5 => Some(180.0),
        _ => None,
    }
}

fn run_on(workers: usize) -> (SuiteReport, suite::Timings) {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .unwrap()
        .install(|| suite::run_suite(SuiteName::Full))
}

/// Radial and rotation factors of the reference heteroclinic map at zero
/// tilt, written out independently of the zoo.
mod radial {
    pub const YA: f64 = 0.5;
    pub const YB: f64 = -0.5;

    pub fn omega(y: f64) -> f64 {
        0.3 + 0.5 * (y - YA)
    }

    pub fn m(y: f64) -> f64 {
        let t = (y - YA) * (y - YB) / 0.25;
        let q = t * t;
        y - 0.1 * q / (1.0 + q)
    }

    pub fn m_inv(y: f64) -> f64 {
        // m(s) - s lies in [-0.1, 0]
        let (mut lo, mut hi) = (y - 1e-12, y + 0.1 + 1e-12);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if m(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// First `n ≥ 1` with `x_n < level`, and `x_n`, iterating forward
    /// (`dir = 1`) or backward.
    pub fn first_below(x0: f64, y0: f64, dir: i64, level: f64, cap: u64) -> Option<(u64, f64)> {
        let (mut x, mut y) = (x0, y0);
        for n in 1..=cap {
            if dir > 0 {
                y = m(y);
                x += omega(y);
            } else {
                x -= omega(y);
                y = m_inv(y);
            }
            if !(-1.0..=1.0).contains(&y) {
                return None;
            }
            if x < level {
                return Some((n, x));
            }
        }
        None
    }
}

/// Compares every mixed sample of the skew-het certificate with the radial
/// iteration. Returns a failure description, if any.
fn radial_oracle(c: &Certificate) -> Result<String, String> {
    let z = c.witness;
    let mut worst: f64 = 0.0;
    for s in &c.mixed {
        let level = z.x - s.k as f64 * c.m0;
        let cap = 100 * (s.n_plus + s.n_minus + 10);
        let (np, xp) =
            radial::first_below(z.x, z.y, 1, level, cap).ok_or(format!("k={}: forward oracle stalled", s.k))?;
        let (nm, xm) =
            radial::first_below(z.x, z.y, -1, level, cap).ok_or(format!("k={}: backward oracle stalled", s.k))?;
        if np.abs_diff(s.n_plus) > 1 || nm.abs_diff(s.n_minus) > 1 {
            return Err(format!(
                "k={}: times ({np}, {nm}) vs certificate ({}, {})",
                s.k, s.n_plus, s.n_minus
            ));
        }
        let avg = (xp - xm) / (np + nm) as f64;
        // a one-step disagreement moves the average by at most M₀ / (n⁺ + n⁻)
        let slack = if np == s.n_plus && nm == s.n_minus {
            1e-9
        } else {
            s.bound
        };
        if (avg - s.average).abs() > slack {
            return Err(format!("k={}: average {avg} vs certificate {}", s.k, s.average));
        }
        worst = worst.max((avg - s.average).abs());
        if s.k == 1000 && avg.abs() > 0.02 {
            return Err(format!("k=1000: oracle average {avg} exceeds 0.02"));
        }
    }
    Ok(format!(
        "{} samples agree, largest difference {worst:.2e}",
        c.mixed.len()
    ))
}

fn main() {
    let t = Instant::now();
    let (report, timings) = run_on(1);
    let first_pass = t.elapsed().as_secs_f64();

    let mut verdicts: Vec<(u8, bool, String)> = Vec::new();
    for c in 1..=8u8 {
        let mut pass = report.criterion_passed(c).unwrap_or(false);
        let secs = timings.iter().find(|x| x.0 == c).map_or(0.0, |x| x.1);
        let mut detail = format!("{}; {secs:.1} s", suite::describe(c));
        if let Some(limit) = target_s(c) {
            if secs > limit {
                pass = false;
                detail.push_str(&format!(" exceeds {limit} s"));
            }
        }
        if c == 5 {
            let cfg = suite::pinned("c5-skew-het");
            let oracle = match run::execute(&cfg).map(|r| r.outcome) {
                Ok(Outcome::TheoremC(TheoremCOutcome::Certificate(cert))) => radial_oracle(&cert),
                Ok(_) => Err("no certificate".to_string()),
                Err(e) => Err(e.to_string()),
            };
            match oracle {
                Ok(msg) => detail.push_str(&format!("; radial oracle: {msg}")),
                Err(msg) => {
                    pass = false;
                    detail.push_str(&format!("; radial oracle FAILED: {msg}"));
                }
            }
        }
        for k in report.checks.iter().filter(|k| k.criterion == c && !k.pass) {
            detail.push_str(&format!("; failed {}: {}", k.id, k.detail));
        }
        verdicts.push((c, pass, detail));
    }

    let bytes = report.to_jsonl().unwrap();
    let again = run_on(1).0.to_jsonl().unwrap();
    let eight = run_on(8).0.to_jsonl().unwrap();
    let same_twice = bytes == again;
    let same_workers = bytes == eight;
    verdicts.push((
        9,
        same_twice && same_workers,
        format!(
            "suite full records: repeat identical {same_twice}, 1 vs 8 workers identical {same_workers} ({} bytes)",
            bytes.len()
        ),
    ));

    println!("acceptance ({first_pass:.1} s for one suite pass)");
    for (c, pass, detail) in &verdicts {
        println!("criterion {c}: {} {detail}", if *pass { "PASS" } else { "FAIL" });
    }
    let failed: Vec<u8> = verdicts.iter().filter(|v| !v.1).map(|v| v.0).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
