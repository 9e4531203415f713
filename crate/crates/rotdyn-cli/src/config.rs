//! Experiment configuration. A config fully determines a run: two runs
//! with equal configs write identical result records.
//!
//! Units: angles and rotation numbers in turns, heights in chart units,
//! resolutions in cells, horizons in iterates.

use std::path::{Path, PathBuf};

use rotdyn::branches::{LambdaSide, TheoremCConfig};
use rotdyn::invsets::{GraphCurve, Grid, GridRegion};
use rotdyn::mapzoo::MapSpec;
use rotdyn::rotset::{BandWindow, EstimatorOptions, LatticePlan, RadiiSchedule, SamplingPlan};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CONFIG_SCHEMA: &str = "rotdyn-config/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub map: MapSpec,
    pub operation: Operation,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Inequalities asserted on the final estimate; a failure exits with
    /// the assertion code.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expect: Vec<Expectation>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Operation {
    RhoN {
        /// `(θ, y)` with `θ` in turns.
        point: [f64; 2],
        n: u64,
    },
    RhoK {
        region: BandRegion,
        m: u64,
        n: u64,
        sampling: Sampling,
        estimator: EstimatorOptions,
    },
    RhoLoc {
        schedule: RadiiSchedule,
        m: u64,
        n: u64,
        lattice: LatticePlan,
        estimator: EstimatorOptions,
    },
    RhoAnn {
        windows: Vec<BandWindow>,
        m: u64,
        n: u64,
        sampling: Sampling,
        estimator: EstimatorOptions,
    },
    RhoMes {
        region: BandRegion,
        burn_in: u64,
        length: u64,
        sampling: Sampling,
        estimator: EstimatorOptions,
    },
    Theta {
        region: BandRegion,
        horizon: u32,
        dilation: i64,
    },
    Branches {
        /// Upper and lower curve of the band.
        curves: [CurveSpec; 2],
        nx: usize,
        ny: usize,
        depth: u32,
        side: LambdaSide,
        /// Base point; defaults to the first occupied cell of the limit set.
        #[serde(default)]
        base: Option<[f64; 2]>,
        /// Window width in tiles; defaults to the width for `M₀` of the map.
        #[serde(default)]
        tiles: Option<usize>,
    },
    TheoremC {
        curves: [CurveSpec; 3],
        config: TheoremCConfig,
    },
}

impl Operation {
    pub fn id(&self) -> &'static str {
        match self {
            Operation::RhoN { .. } => "rho-n",
            Operation::RhoK { .. } => "rho-k",
            Operation::RhoLoc { .. } => "rho-loc",
            Operation::RhoAnn { .. } => "rho-ann",
            Operation::RhoMes { .. } => "rho-mes",
            Operation::Theta { .. } => "theta",
            Operation::Branches { .. } => "branches",
            Operation::TheoremC { .. } => "theorem-c",
        }
    }
}

/// Full band `[y0, y1]` over the circle at `nx × ny` cells. With `centered`
/// the cell centers sit on the boundary heights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandRegion {
    pub y0: f64,
    pub y1: f64,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub centered: bool,
}

impl BandRegion {
    pub fn grid(&self) -> Result<Grid, CliError> {
        let g = if self.centered {
            Grid::band_centered(self.y0, self.y1, self.nx, self.ny)
        } else {
            Grid::band(self.y0, self.y1, self.nx, self.ny)
        };
        g.map_err(|e| CliError::Schema(format!("operation.region: {e}")))
    }

    pub fn region(&self) -> Result<GridRegion, CliError> {
        Ok(GridRegion::full(self.grid()?))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    /// Every `stride`-th cell in each axis seeds an orbit.
    pub stride: usize,
    /// Jitter seeds inside their cells using the config seed.
    pub jitter: bool,
}

impl Sampling {
    pub fn plan(&self, seed: u64) -> SamplingPlan {
        SamplingPlan {
            stride: self.stride,
            jitter_seed: self.jitter.then_some(seed),
        }
    }
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            stride: 1,
            jitter: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum CurveSpec {
    Horizontal {
        y: f64,
    },
    /// Heights at equally spaced angles, linearly interpolated.
    Nodes {
        nodes: Vec<f64>,
    },
}

impl CurveSpec {
    pub fn build(&self) -> Result<GraphCurve, CliError> {
        match self {
            CurveSpec::Horizontal { y } if y.is_finite() => Ok(GraphCurve::horizontal(*y)),
            CurveSpec::Horizontal { y } => Err(CliError::Schema(format!("curve height {y} is not finite"))),
            CurveSpec::Nodes { nodes } => {
                GraphCurve::from_nodes(nodes.clone()).map_err(|e| CliError::Schema(format!("curve: {e}")))
            }
        }
    }
}

/// Inequalities checked against the final estimate of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum Expectation {
    /// No gap wider than `gap_tol`.
    Interval { gap_tol: f64 },
    /// The estimate lies in `[lo - tol, hi + tol]`.
    Within { lo: f64, hi: f64, tol: f64 },
    /// Some point of the estimate is within `tol` of `value`.
    Contains { value: f64, tol: f64 },
    /// Hausdorff distance to `[lo, hi]` at most `tol`.
    Hausdorff { lo: f64, hi: f64, tol: f64 },
}

/// Parses a config, reporting the offending field path on schema errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::Schema(format!("at `{}`: {}", e.path(), e.inner())))?;
    if cfg.schema != CONFIG_SCHEMA {
        return Err(CliError::Schema(format!(
            "at `schema`: expected \"{CONFIG_SCHEMA}\", found \"{}\"",
            cfg.schema
        )));
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Pinned estimator options used when a config is built from flags.
pub fn default_estimator() -> EstimatorOptions {
    EstimatorOptions::default()
}

impl ExperimentConfig {
    pub fn new(map: MapSpec, operation: Operation, seed: u64) -> Self {
        ExperimentConfig {
            schema: CONFIG_SCHEMA.to_string(),
            map,
            operation,
            seed,
            out: None,
            expect: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_field_paths() {
        let cfg = ExperimentConfig::new(
            MapSpec::Identity,
            Operation::RhoN {
                point: [0.3, 0.0],
                n: 5,
            },
            7,
        );
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(parse_config(&text).unwrap(), cfg);

        let bad = text.replace("\"n\": 5", "\"n\": -5");
        match parse_config(&bad) {
            Err(CliError::Schema(msg)) => assert!(msg.contains("operation.rho-n.n"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
        let bad = text.replace("rotdyn-config/1", "rotdyn-config/0");
        assert!(matches!(parse_config(&bad), Err(CliError::Schema(_))));
        let bad = text.replace("\"seed\": 7", "\"seed\": 7, \"sede\": 1");
        assert!(matches!(parse_config(&bad), Err(CliError::Schema(_))));
    }

    #[test]
    fn estimator_options_have_no_defaults() {
        let text = r#"{"schema":"rotdyn-config/1","map":{"family":"identity"},"seed":0,
            "operation":{"rho-k":{"region":{"y0":-1,"y1":1,"nx":4,"ny":4},"m":1,"n":10,
            "sampling":{"stride":1,"jitter":false}}}}"#;
        match parse_config(text) {
            Err(CliError::Schema(msg)) => assert!(msg.contains("estimator"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }
}
