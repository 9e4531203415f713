use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rotdyn::branches::{LambdaSide, TheoremCOutcome};
use rotdyn::mapzoo::MapSpec;
use rotdyn::rotset::{BandWindow, EndSide, LatticePlan, RadiiSchedule};
use rotdyn_cli::config::{self, BandRegion, CurveSpec, ExperimentConfig, Operation, Sampling};
use rotdyn_cli::error::{exit, CliError};
use rotdyn_cli::record::{self, Outcome, ResultRecord, RunInfo};
use rotdyn_cli::{plot, run, suite};

/// Numerical rotation sets of annulus and plane homeomorphisms.
#[derive(Parser, Debug)]
#[command(name = "rotdyn", version)]
struct Cli {
    /// Experiment config (JSON). Its operation must match the subcommand;
    /// subcommand flags are then ignored.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for records, CSV dumps and plots.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for randomized steps (jittered sampling).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Clone)]
struct MapArg {
    /// Zoo map: identity, rotation, twist, drift, half, quarter-half,
    /// sin-profile, lorentzian, twice-reeb, double-reeb, skew-het,
    /// skew-het-tilted.
    #[arg(long, default_value = "identity")]
    map: String,
}

impl MapArg {
    fn spec(&self) -> Result<MapSpec, CliError> {
        MapSpec::by_name(&self.map).ok_or_else(|| CliError::Schema(format!("at `map`: unknown map \"{}\"", self.map)))
    }
}

#[derive(Args, Debug, Clone)]
struct BandArgs {
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    y0: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    y1: f64,
    #[arg(long, default_value_t = 64)]
    nx: usize,
    #[arg(long, default_value_t = 64)]
    ny: usize,
}

impl BandArgs {
    fn region(&self) -> BandRegion {
        BandRegion {
            y0: self.y0,
            y1: self.y1,
            nx: self.nx,
            ny: self.ny,
            centered: false,
        }
    }
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let v = parse_list(s)?;
    <[f64; 2]>::try_from(v).map_err(|_| format!("expected two comma-separated numbers, got \"{s}\""))
}

fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("\"{t}\": {e}")))
        .collect()
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Rotation number of one orbit over n iterates.
    RhoN {
        #[command(flatten)]
        map: MapArg,
        #[arg(long, default_value_t = 100)]
        n: u64,
        /// Start point `θ,y` (θ in turns).
        #[arg(long, value_parser = parse_pair, default_value = "0,0", allow_hyphen_values = true)]
        point: [f64; 2],
    },
    /// Rotation set of a band region.
    RhoK {
        #[command(flatten)]
        map: MapArg,
        #[command(flatten)]
        band: BandArgs,
        #[arg(long, default_value_t = 1)]
        m: u64,
        #[arg(long, default_value_t = 1000)]
        horizon: u64,
    },
    /// Local rotation set at an end through a radii schedule.
    RhoLoc {
        #[command(flatten)]
        map: MapArg,
        #[arg(long, value_enum, default_value = "upper")]
        side: SideArg,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        start: f64,
        #[arg(long, default_value_t = 0.5)]
        shrink: f64,
        #[arg(long, default_value_t = 8)]
        depth: usize,
        #[arg(long, default_value_t = 3)]
        inner: usize,
        #[arg(long, default_value_t = 1)]
        m: u64,
        #[arg(long, default_value_t = 1000)]
        horizon: u64,
        #[arg(long, default_value_t = 8)]
        lattice_nx: usize,
        #[arg(long, default_value_t = 0.01)]
        dy: f64,
    },
    /// Rotation set of the annulus through growing windows.
    RhoAnn {
        #[command(flatten)]
        map: MapArg,
        /// Window half-heights.
        #[arg(long, value_delimiter = ',', default_values_t = [2.0, 4.0, 6.0])]
        halves: Vec<f64>,
        #[arg(long, default_value_t = 32)]
        nx: usize,
        /// Cells per unit height.
        #[arg(long, default_value_t = 16.0)]
        per_unit: f64,
        #[arg(long, default_value_t = 1)]
        m: u64,
        #[arg(long, default_value_t = 1000)]
        horizon: u64,
    },
    /// Birkhoff averages over a band region.
    RhoMes {
        #[command(flatten)]
        map: MapArg,
        #[command(flatten)]
        band: BandArgs,
        #[arg(long, default_value_t = 100)]
        burn_in: u64,
        #[arg(long, default_value_t = 1000)]
        length: u64,
    },
    /// Maximal invariant set of a band region.
    Theta {
        #[command(flatten)]
        map: MapArg,
        #[command(flatten)]
        band: BandArgs,
        #[arg(long, default_value_t = 200)]
        horizon: u32,
        #[arg(long, default_value_t = 1)]
        dilation: i64,
    },
    /// Unstable or stable set of a band and the branch through a point.
    Branches {
        #[command(flatten)]
        map: MapArg,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        upper: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        lower: f64,
        #[arg(long, default_value_t = 256)]
        nx: usize,
        #[arg(long, default_value_t = 256)]
        ny: usize,
        #[arg(long, default_value_t = 50)]
        depth: u32,
        #[arg(long, value_enum, default_value = "unstable")]
        side: LambdaArg,
        #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
        base: Option<[f64; 2]>,
        #[arg(long)]
        tiles: Option<usize>,
    },
    /// Heteroclinic experiment between two oppositely rotating bands.
    TheoremC {
        #[command(flatten)]
        map: MapArg,
        /// Tilt of the skew maps.
        #[arg(long)]
        eps: Option<f64>,
        /// Curve heights `Γ₀,Γ₁,Γ₂`; defaults to the map's levels.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        curves: Option<Vec<f64>>,
    },
    /// Runs a group of acceptance checks.
    Suite {
        #[arg(value_enum)]
        name: suite::SuiteName,
    },
    /// Writes the pinned acceptance configs into `--out`.
    Configs,
    /// Renders the SVG figures of a record.
    Plot { record: PathBuf },
    /// Re-asserts every inequality stored in a record.
    Check {
        record: PathBuf,
        /// Also re-run certificate orbits through the map.
        #[arg(long)]
        rerun: bool,
    },
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum SideArg {
    Upper,
    Lower,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum LambdaArg {
    Unstable,
    Stable,
}

fn estimator() -> rotdyn::rotset::EstimatorOptions {
    config::default_estimator()
}

/// Builds the config a run subcommand describes through its flags.
fn config_from_flags(cmd: &Cmd, seed: u64) -> Result<ExperimentConfig, CliError> {
    let (map, op) = match cmd {
        Cmd::RhoN { map, n, point } => (map.spec()?, Operation::RhoN { point: *point, n: *n }),
        Cmd::RhoK { map, band, m, horizon } => (
            map.spec()?,
            Operation::RhoK {
                region: band.region(),
                m: *m,
                n: *horizon,
                sampling: Sampling::default(),
                estimator: estimator(),
            },
        ),
        Cmd::RhoLoc {
            map,
            side,
            start,
            shrink,
            depth,
            inner,
            m,
            horizon,
            lattice_nx,
            dy,
        } => (
            map.spec()?,
            Operation::RhoLoc {
                schedule: RadiiSchedule {
                    side: match side {
                        SideArg::Upper => EndSide::Upper,
                        SideArg::Lower => EndSide::Lower,
                    },
                    start: *start,
                    shrink: *shrink,
                    depth: *depth,
                    inner: *inner,
                },
                m: *m,
                n: *horizon,
                lattice: LatticePlan {
                    nx: *lattice_nx,
                    dy: *dy,
                },
                estimator: estimator(),
            },
        ),
        Cmd::RhoAnn {
            map,
            halves,
            nx,
            per_unit,
            m,
            horizon,
        } => (
            map.spec()?,
            Operation::RhoAnn {
                windows: halves
                    .iter()
                    .map(|&h| BandWindow {
                        y0: -h,
                        y1: h,
                        nx: *nx,
                        ny: (2.0 * h * per_unit).round().max(1.0) as usize,
                    })
                    .collect(),
                m: *m,
                n: *horizon,
                sampling: Sampling::default(),
                estimator: estimator(),
            },
        ),
        Cmd::RhoMes {
            map,
            band,
            burn_in,
            length,
        } => (
            map.spec()?,
            Operation::RhoMes {
                region: band.region(),
                burn_in: *burn_in,
                length: *length,
                sampling: Sampling::default(),
                estimator: estimator(),
            },
        ),
        Cmd::Theta {
            map,
            band,
            horizon,
            dilation,
        } => (
            map.spec()?,
            Operation::Theta {
                region: band.region(),
                horizon: *horizon,
                dilation: *dilation,
            },
        ),
        Cmd::Branches {
            map,
            upper,
            lower,
            nx,
            ny,
            depth,
            side,
            base,
            tiles,
        } => (
            map.spec()?,
            Operation::Branches {
                curves: [CurveSpec::Horizontal { y: *upper }, CurveSpec::Horizontal { y: *lower }],
                nx: *nx,
                ny: *ny,
                depth: *depth,
                side: match side {
                    LambdaArg::Unstable => LambdaSide::Unstable,
                    LambdaArg::Stable => LambdaSide::Stable,
                },
                base: *base,
                tiles: *tiles,
            },
        ),
        Cmd::TheoremC { map, eps, curves } => {
            let mut spec = map.spec()?;
            let levels = match &mut spec {
                MapSpec::SkewHet(p) => {
                    if let Some(e) = eps {
                        p.tilt = *e;
                    }
                    [p.levels.y0, p.levels.y1, p.levels.y2]
                }
                MapSpec::SkewHetTilted(p) => {
                    if let Some(e) = eps {
                        p.tilt = *e;
                    }
                    let (a, b, c) = p.levels();
                    [a, b, c]
                }
                _ if eps.is_some() => {
                    return Err(CliError::Schema("at `eps`: only the skew maps take a tilt".into()));
                }
                _ => [1.0, 0.0, -1.0],
            };
            let levels = match curves {
                Some(v) => <[f64; 3]>::try_from(v.clone())
                    .map_err(|_| CliError::Schema("at `curves`: expected three heights".into()))?,
                None => levels,
            };
            (
                spec,
                Operation::TheoremC {
                    curves: levels.map(|y| CurveSpec::Horizontal { y }),
                    config: suite::theorem_c_config(),
                },
            )
        }
        Cmd::Suite { .. } | Cmd::Configs | Cmd::Plot { .. } | Cmd::Check { .. } => unreachable!("not a run subcommand"),
    };
    Ok(ExperimentConfig::new(map, op, seed))
}

fn op_name(cmd: &Cmd) -> &'static str {
    match cmd {
        Cmd::RhoN { .. } => "rho-n",
        Cmd::RhoK { .. } => "rho-k",
        Cmd::RhoLoc { .. } => "rho-loc",
        Cmd::RhoAnn { .. } => "rho-ann",
        Cmd::RhoMes { .. } => "rho-mes",
        Cmd::Theta { .. } => "theta",
        Cmd::Branches { .. } => "branches",
        Cmd::TheoremC { .. } => "theorem-c",
        Cmd::Suite { .. } => "suite",
        Cmd::Configs => "configs",
        Cmd::Plot { .. } => "plot",
        Cmd::Check { .. } => "check",
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> anyhow::Result<()> {
    record::write_file(&dir.join(name), contents).with_context(|| format!("writing {name}"))
}

fn summarize(rec: &ResultRecord) -> String {
    let hull = |e: &rotdyn::rotset::RotationSetEstimate| {
        e.hull()
            .map(|h| format!("[{}, {}] in {} interval(s)", h.lo(), h.hi(), e.intervals.len()))
            .unwrap_or_else(|| "empty".into())
    };
    match &rec.outcome {
        Outcome::RhoN { value } => format!("rho_n = {value}"),
        Outcome::Theta(t) => format!("{} invariant cells in {} components", t.cells, t.components),
        Outcome::Branches(b) => format!(
            "{} cells; branch compact {}, meets lower {}, diameter {:.4}",
            b.limit.count, b.branch.compact, b.meets_lower, b.diameter
        ),
        Outcome::TheoremC(TheoremCOutcome::Certificate(c)) => format!(
            "certificate: n = {}, witness ({}, {}), mixed average {:?} at k = {:?}",
            c.n,
            c.witness.x,
            c.witness.y,
            c.mixed.last().map(|s| s.average),
            c.mixed.last().map(|s| s.k)
        ),
        Outcome::TheoremC(TheoremCOutcome::Inconclusive(i)) => format!("inconclusive at {}: {}", i.stage, i.reason),
        Outcome::Empty { reason } => reason.clone(),
        other => other.final_estimate().map(|e| hull(&e)).unwrap_or_default(),
    }
}

fn run_experiment(cli: &Cli, threads: usize) -> anyhow::Result<i32> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let cfg = config::load_config(path)?;
            if cfg.operation.id() != op_name(&cli.cmd) {
                return Err(CliError::Schema(format!(
                    "at `operation`: config runs \"{}\" but the subcommand is \"{}\"",
                    cfg.operation.id(),
                    op_name(&cli.cmd)
                ))
                .into());
            }
            cfg
        }
        None => config_from_flags(&cli.cmd, 0)?,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    // --out only picks the directory; the record keeps the config's own field
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("rotdyn-out"));
    let t = Instant::now();
    let rec = run::execute(&cfg)?;
    let elapsed = t.elapsed().as_secs_f64();
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    write(&out, "record.jsonl", &rec.to_jsonl()?)?;
    let info = serde_json::to_string_pretty(&RunInfo::new(threads, elapsed))?;
    write(&out, "run-info.json", &format!("{info}\n"))?;
    for (name, csv) in record::csv_dumps(&rec.outcome) {
        write(&out, name, &csv)?;
    }
    println!("{}: {}", cfg.operation.id(), summarize(&rec));
    for c in rec.checks.iter().filter(|c| !c.pass) {
        println!("FAILED {}: {}", c.name, c.detail);
    }
    println!("record: {}", out.join("record.jsonl").display());
    Ok(rec.status.exit_code())
}

fn read_record(path: &Path) -> anyhow::Result<ResultRecord> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(ResultRecord::from_jsonl(&text)?)
}

fn dispatch(cli: &Cli, threads: usize) -> anyhow::Result<i32> {
    match &cli.cmd {
        Cmd::Suite { name } => {
            let (report, timings) = suite::run_suite(*name);
            for &c in name.criteria() {
                let pass = report.criterion_passed(c).unwrap_or(false);
                let secs = timings.iter().find(|t| t.0 == c).map(|t| t.1).unwrap_or(0.0);
                println!(
                    "criterion {c}: {} ({}) [{secs:.1} s]",
                    if pass { "PASS" } else { "FAIL" },
                    suite::describe(c)
                );
            }
            for k in report.checks.iter().filter(|k| !k.pass) {
                println!("  failed {}: {}", k.id, k.detail);
            }
            if let Some(out) = &cli.out {
                std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
                write(out, "suite.jsonl", &report.to_jsonl()?)?;
                let total: f64 = timings.iter().map(|t| t.1).sum();
                let info = serde_json::to_string_pretty(&RunInfo::new(threads, total))?;
                write(out, "run-info.json", &format!("{info}\n"))?;
            }
            Ok(if report.passed { exit::OK } else { exit::ASSERTION })
        }
        Cmd::Configs => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("configs/acceptance"));
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (stem, cfg) in suite::pinned_configs() {
                let name = format!("{stem}.json");
                write(&out, &name, &format!("{}\n", serde_json::to_string_pretty(&cfg)?))?;
                println!("{}", out.join(&name).display());
            }
            Ok(exit::OK)
        }
        Cmd::Plot { record: path } => {
            let rec = read_record(path)?;
            let out = cli
                .out
                .clone()
                .or_else(|| path.parent().map(Path::to_path_buf))
                .unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (name, svg) in plot::render(&rec) {
                write(&out, &name, &svg)?;
                println!("{}", out.join(&name).display());
            }
            Ok(exit::OK)
        }
        Cmd::Check { record: path, rerun } => {
            let rec = read_record(path)?;
            let r = run::revalidate(&rec, *rerun)?;
            for c in &r.checks {
                let mark = if c.pass { "ok    " } else { "FAILED" };
                if c.detail.is_empty() {
                    println!("{mark} {}", c.name);
                } else {
                    println!("{mark} {}: {}", c.name, c.detail);
                }
            }
            for m in &r.mismatches {
                println!("MISMATCH {m}");
            }
            Ok(if r.passed() { exit::OK } else { exit::ASSERTION })
        }
        _ => run_experiment(cli, threads),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.unwrap_or_else(rayon::current_num_threads);
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(exit::INTERNAL as u8);
        }
    }
    let code = match dispatch(&cli, threads) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            e.downcast_ref::<CliError>().map_or(exit::INTERNAL, CliError::exit_code)
        }
    };
    ExitCode::from(code as u8)
}
