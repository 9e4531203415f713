//! Result records: line-delimited JSON, one section per line, plus an
//! informative run-info sidecar and CSV sample dumps.
//!
//! Line order is fixed: `header`, `result`, one `check` line per asserted
//! inequality, `summary`. Wall-clock time and worker counts never appear in
//! the record itself, so records are byte-comparable across runs.

use std::fmt::Write as _;
use std::path::Path;

use rotdyn::branches::{BranchSummary, LambdaSide, TheoremCOutcome};
use rotdyn::cover::MapMeta;
use rotdyn::invsets::{GraphCurve, RegionRecord};
use rotdyn::rotset::{AnnEstimate, LocalEstimate, MeasuredEstimate, RhoK, RotationSetEstimate};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const RECORD_SCHEMA: &str = "rotdyn-record/1";
pub const RUN_INFO_SCHEMA: &str = "rotdyn-run-info/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Outcome {
    RhoN {
        value: f64,
    },
    RhoK(RhoK),
    RhoLoc(LocalEstimate),
    RhoAnn(AnnEstimate),
    RhoMes(MeasuredEstimate),
    Theta(ThetaOutcome),
    Branches(BranchesOutcome),
    TheoremC(TheoremCOutcome),
    /// An estimator found no admissible samples.
    Empty {
        reason: String,
    },
}

impl Outcome {
    /// The estimate that expectations are checked against.
    pub fn final_estimate(&self) -> Option<RotationSetEstimate> {
        match self {
            Outcome::RhoN { value } => Some(RotationSetEstimate::from_samples(vec![*value], [0, 0], 0.0)),
            Outcome::RhoK(r) => Some(r.estimate.clone()),
            Outcome::RhoLoc(l) => l.levels.last().cloned(),
            Outcome::RhoAnn(a) => Some(a.union.clone()),
            Outcome::RhoMes(m) => Some(m.estimate.clone()),
            Outcome::Empty { .. } => Some(RotationSetEstimate::from_intervals(Vec::new(), 0.0)),
            _ => None,
        }
    }

    /// Successive levels for staircase plots and interval dumps.
    pub fn levels(&self) -> Vec<RotationSetEstimate> {
        match self {
            Outcome::RhoLoc(l) => l.levels.clone(),
            Outcome::RhoAnn(a) => a.levels.clone(),
            Outcome::RhoK(r) => vec![r.estimate.clone(), r.tail.clone()],
            _ => self.final_estimate().into_iter().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaOutcome {
    pub horizon: u32,
    pub dilation: i64,
    pub cells: usize,
    pub components: usize,
    pub region: RegionRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchesOutcome {
    pub side: LambdaSide,
    pub curves: [GraphCurve; 2],
    pub depth: u32,
    pub m0: f64,
    /// Occupied cells of the conservative sequence after each step.
    pub counts: Vec<usize>,
    /// The sequence never grows.
    pub nested: bool,
    pub escape_outside: usize,
    pub conservative_outside: usize,
    pub invariance_violations: usize,
    pub meets_lower: bool,
    pub meets_upper: bool,
    pub branch: BranchSummary,
    pub diameter: f64,
    pub limit: RegionRecord,
    pub component: RegionRecord,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    AssertionFailure,
    Inconclusive,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => crate::error::exit::OK,
            Status::AssertionFailure => crate::error::exit::ASSERTION,
            Status::Inconclusive => crate::error::exit::INCONCLUSIVE,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRecord {
    pub config: ExperimentConfig,
    pub map: MapMeta,
    pub outcome: Outcome,
    pub checks: Vec<CheckLine>,
    pub status: Status,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "kebab-case")]
enum Line {
    Header {
        schema: String,
        config: ExperimentConfig,
        map: MapMeta,
    },
    Result {
        outcome: Outcome,
    },
    Check(CheckLine),
    Summary {
        status: Status,
        checks: usize,
        failed: usize,
    },
}

fn to_line<T: Serialize>(v: &T) -> Result<String, CliError> {
    serde_json::to_string(v).map_err(|e| CliError::Internal(format!("serializing record: {e}")))
}

impl ResultRecord {
    pub fn to_jsonl(&self) -> Result<String, CliError> {
        let mut out = String::new();
        let header = Line::Header {
            schema: RECORD_SCHEMA.to_string(),
            config: self.config.clone(),
            map: self.map.clone(),
        };
        out.push_str(&to_line(&header)?);
        out.push('\n');
        out.push_str(&to_line(&Line::Result {
            outcome: self.outcome.clone(),
        })?);
        out.push('\n');
        for c in &self.checks {
            out.push_str(&to_line(&Line::Check(c.clone()))?);
            out.push('\n');
        }
        out.push_str(&to_line(&Line::Summary {
            status: self.status,
            checks: self.checks.len(),
            failed: self.checks.iter().filter(|c| !c.pass).count(),
        })?);
        out.push('\n');
        Ok(out)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, CliError> {
        let bad = |msg: String| CliError::Schema(format!("record: {msg}"));
        let mut header = None;
        let mut outcome = None;
        let mut checks = Vec::new();
        let mut status = None;
        for (k, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let de = &mut serde_json::Deserializer::from_str(line);
            let parsed: Line = serde_path_to_error::deserialize(de)
                .map_err(|e| bad(format!("line {}: at `{}`: {}", k + 1, e.path(), e.inner())))?;
            match parsed {
                Line::Header { schema, config, map } => {
                    if schema != RECORD_SCHEMA {
                        return Err(bad(format!("unsupported schema \"{schema}\"")));
                    }
                    header = Some((config, map));
                }
                Line::Result { outcome: o } => outcome = Some(o),
                Line::Check(c) => checks.push(c),
                Line::Summary { status: s, .. } => status = Some(s),
            }
        }
        let (config, map) = header.ok_or_else(|| bad("missing header line".into()))?;
        Ok(ResultRecord {
            config,
            map,
            outcome: outcome.ok_or_else(|| bad("missing result line".into()))?,
            checks,
            status: status.ok_or_else(|| bad("missing summary line".into()))?,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunInfo {
    pub schema: String,
    pub version: String,
    pub threads: usize,
    pub wall_clock_s: f64,
}

impl RunInfo {
    pub fn new(threads: usize, wall_clock_s: f64) -> Self {
        RunInfo {
            schema: RUN_INFO_SCHEMA.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            threads,
            wall_clock_s,
        }
    }
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// `level,index,lo,hi` rows for every interval of every level.
pub fn intervals_csv(levels: &[RotationSetEstimate]) -> String {
    let mut s = String::from("level,index,lo,hi\n");
    for (k, e) in levels.iter().enumerate() {
        for (i, iv) in e.intervals.iter().enumerate() {
            let _ = writeln!(s, "{k},{i},{},{}", iv.lo(), iv.hi());
        }
    }
    s
}

/// CSV dumps for a record: file name and contents.
pub fn csv_dumps(outcome: &Outcome) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    match outcome {
        Outcome::TheoremC(TheoremCOutcome::Certificate(c)) => {
            let mut s = String::from("k,level,n_plus,n_minus,x_plus,x_minus,average,bound\n");
            for m in &c.mixed {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    m.k, m.level, m.n_plus, m.n_minus, m.x_plus, m.x_minus, m.average, m.bound
                );
            }
            out.push(("mixed.csv", s));
            let mut s = String::from("direction,n,displacement\n");
            for (n, d) in &c.forward_trace {
                let _ = writeln!(s, "forward,{n},{d}");
            }
            for (n, d) in &c.backward_trace {
                let _ = writeln!(s, "backward,{n},{d}");
            }
            out.push(("trace.csv", s));
        }
        Outcome::Theta(_) | Outcome::Branches(_) | Outcome::TheoremC(_) => {}
        other => out.push(("intervals.csv", intervals_csv(&other.levels()))),
    }
    out
}
