//! Pipeline commands behind the `polyplan` binary. Each command reads and
//! writes JSON artifacts (CSV for bench tables); outputs are written to a
//! temporary file in the target directory and renamed into place.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use polyplan_core::decomposition::{audit_region, decompose, DecompositionConfig, RegionLibrary};
use polyplan_core::mode_graph::{attach_boundary, build_graph, calibrate_costs, GraphConfig, ModeGraph, RawEdge};
use polyplan_core::pendulum::{PendulumSystem, SystemConfig};
use polyplan_core::planner::{plan, PlanSolution, PlannerConfig};
use polyplan_core::rng::{sub_seed, STREAM_AUDIT};
use polyplan_core::Error as CoreError;

/// Samples per region in the post-decomposition audit.
pub const AUDIT_SAMPLES: usize = 1000;
/// Torque excess tolerated by the audit and by validation.
pub const TORQUE_TOL: f64 = 1e-6;
/// Largest fraction of bad audit samples a region may have.
pub const AUDIT_MAX_RATE: f64 = 1e-3;
pub const RESIDUAL_TOL: f64 = 1e-6;
pub const MEMBERSHIP_TOL: f64 = 1e-7;

#[derive(Clone, Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("decomposition failed: {0}")]
    Decomposition(String),
    #[error("no plan: {0}")]
    NoPlan(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Parse(_) => 2,
            CliError::Decomposition(_) => 3,
            CliError::NoPlan(_) => 4,
            CliError::Validation(_) => 5,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// System parameters, optionally with decomposition settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemFile {
    #[serde(flatten)]
    pub system: SystemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionConfig>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Parses `"q,qdot"`; either entry may be written `pi` or `-pi`.
pub fn parse_state(text: &str) -> CliResult<[f64; 2]> {
    let parse = |s: &str| -> CliResult<f64> {
        match s.trim() {
            "pi" => Ok(std::f64::consts::PI),
            "-pi" => Ok(-std::f64::consts::PI),
            t => t.parse().map_err(|_| CliError::Parse(format!("bad state component {t:?}"))),
        }
    };
    let parts: Vec<&str> = text.split(',').collect();
    match parts.as_slice() {
        [q, qd] => Ok([parse(q)?, parse(qd)?]),
        _ => Err(CliError::Parse(format!("state must be \"q,qdot\", got {text:?}"))),
    }
}

fn system_from(file: &SystemFile) -> CliResult<PendulumSystem> {
    PendulumSystem::from_config(&file.system).map_err(|e| CliError::Parse(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecomposeReport {
    pub regions: usize,
    /// Fraction of audited samples within the torque bound.
    pub audit_pass_rate: f64,
    pub worst_region_rate: f64,
}

/// Decomposes the system in `config` and audits every region.
pub fn run_decompose(file: &SystemFile, seed: Option<u64>) -> CliResult<(RegionLibrary, DecomposeReport)> {
    let sys = system_from(file)?;
    let mut cfg = file.decomposition.clone().unwrap_or_else(|| DecompositionConfig::for_system(&sys));
    if let Some(seed) = seed {
        cfg.rng_seed = seed;
    }
    let lib = decompose(&sys, &cfg).map_err(|e| match e {
        CoreError::InvalidConfig(_) => CliError::Parse(e.to_string()),
        _ => CliError::Decomposition(e.to_string()),
    })?;
    let mut worst = 0.0f64;
    let mut total = 0.0;
    for r in &lib.regions {
        let rate = audit_region(&sys, r, AUDIT_SAMPLES, TORQUE_TOL, sub_seed(cfg.rng_seed, STREAM_AUDIT, r.id() as u64))
            .map_err(|e| CliError::Decomposition(e.to_string()))?;
        worst = worst.max(rate);
        total += rate;
    }
    let report = DecomposeReport {
        regions: lib.len(),
        audit_pass_rate: 1.0 - total / lib.len().max(1) as f64,
        worst_region_rate: worst,
    };
    Ok((lib, report))
}

pub fn cmd_decompose(config_path: &Path, out_path: &Path, seed: Option<u64>) -> CliResult<DecomposeReport> {
    let file: SystemFile = read_json(config_path)?;
    let (lib, report) = run_decompose(&file, seed)?;
    write_json(out_path, &lib)?;
    Ok(report)
}

fn graph_error(e: CoreError) -> CliError {
    match e {
        CoreError::InvalidConfig(_) => CliError::Parse(e.to_string()),
        _ => CliError::Decomposition(e.to_string()),
    }
}

pub fn run_graph(lib: &RegionLibrary, l_max: f64, seed: u64) -> CliResult<ModeGraph> {
    let cfg = GraphConfig { l_max, rng_seed: seed, ..GraphConfig::default() };
    let raw = build_graph(lib, &cfg).map_err(graph_error)?;
    calibrate(lib, &raw, &cfg)
}

fn calibrate(lib: &RegionLibrary, raw: &[RawEdge], cfg: &GraphConfig) -> CliResult<ModeGraph> {
    calibrate_costs(raw, lib.len(), cfg.l_min, cfg.l_max, cfg.k_max, cfg.prune_below_mean).map_err(graph_error)
}

pub fn cmd_graph(library_path: &Path, l_max: f64, out_path: &Path, seed: u64) -> CliResult<ModeGraph> {
    let lib: RegionLibrary = read_json(library_path)?;
    let graph = run_graph(&lib, l_max, seed)?;
    write_json(out_path, &graph)?;
    Ok(graph)
}

pub fn run_plan(
    lib: &RegionLibrary,
    graph: &ModeGraph,
    x0: [f64; 2],
    xf: [f64; 2],
    cfg: &PlannerConfig,
) -> CliResult<PlanSolution> {
    let no_plan = |e: CoreError| match e {
        CoreError::InvalidConfig(_) => CliError::Parse(e.to_string()),
        _ => CliError::NoPlan(e.to_string()),
    };
    let full = attach_boundary(graph, x0, xf, lib).map_err(no_plan)?;
    plan(lib, &full, x0, xf, cfg).map_err(no_plan)
}

pub fn cmd_plan(
    graph_path: &Path,
    library_path: &Path,
    x0: [f64; 2],
    xf: [f64; 2],
    out_path: &Path,
    cfg: &PlannerConfig,
) -> CliResult<PlanSolution> {
    let graph: ModeGraph = read_json(graph_path)?;
    let lib: RegionLibrary = read_json(library_path)?;
    let sol = run_plan(&lib, &graph, x0, xf, cfg)?;
    write_json(out_path, &sol)?;
    Ok(sol)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// `None` when the check could not run.
    pub passed: Option<bool>,
    pub value: f64,
    pub limit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed != Some(false))
    }
}

/// Recomputes every certificate of a solution from its raw parameters.
pub fn validate_solution(sol: &PlanSolution, file: &SystemFile, lib: Option<&RegionLibrary>) -> CliResult<ValidationReport> {
    let sys = system_from(file)?;
    let n = sys.n();
    let l = sol.pi.len();
    let mut checks = Vec::new();
    let shape_ok = l > 0 && sol.omega.len() == n * l && sol.n == n && (sol.horizon - sys.spec.horizon).abs() < 1e-12;
    checks.push(Check { name: "shape".into(), passed: Some(shape_ok), value: sol.omega.len() as f64, limit: (n * l) as f64 });
    if !shape_ok {
        return Ok(ValidationReport { checks });
    }
    let omega = DVector::from_row_slice(&sol.omega);
    let stacked = sys.spec.build_stacked(l);
    let defect = (&stacked.continuity * &omega).abs().max();
    checks.push(Check { name: "continuity".into(), passed: Some(defect <= RESIDUAL_TOL), value: defect, limit: RESIDUAL_TOL });
    let xb = DVector::from_row_slice(&[sol.x0[0], sol.x0[1], sol.xf[0], sol.xf[1]]);
    let residual = (&stacked.boundary * &omega - xb).abs().max();
    checks.push(Check { name: "boundary".into(), passed: Some(residual <= RESIDUAL_TOL), value: residual, limit: RESIDUAL_TOL });
    let segments: Vec<DVector<f64>> = (0..l).map(|i| omega.rows(i * n, n).into_owned()).collect();
    let excess = segments.iter().map(|w| sys.max_violation(w).1).fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check { name: "torque".into(), passed: Some(excess <= TORQUE_TOL), value: excess, limit: TORQUE_TOL });
    let membership = match lib {
        Some(lib) => {
            let mut worst = f64::INFINITY;
            for (w, &id) in segments.iter().zip(&sol.pi) {
                let region = lib.region(id).map_err(|e| CliError::Parse(e.to_string()))?;
                if region.dim() != n {
                    return Err(CliError::Parse(format!("region {id} has dimension {}, expected {n}", region.dim())));
                }
                worst = worst.min(region.slack_min(w));
            }
            Check { name: "membership".into(), passed: Some(worst >= -MEMBERSHIP_TOL), value: worst, limit: -MEMBERSHIP_TOL }
        }
        None => Check { name: "membership".into(), passed: None, value: f64::NAN, limit: -MEMBERSHIP_TOL },
    };
    checks.push(membership);
    Ok(ValidationReport { checks })
}

pub fn cmd_validate(solution_path: &Path, config_path: &Path, library_path: Option<&Path>) -> CliResult<ValidationReport> {
    let sol: PlanSolution = read_json(solution_path)?;
    let file: SystemFile = read_json(config_path)?;
    let lib: Option<RegionLibrary> = library_path.map(read_json).transpose()?;
    validate_solution(&sol, &file, lib.as_ref())
}

fn default_x0() -> [f64; 2] {
    [0.0, 0.0]
}

fn default_xf() -> [f64; 2] {
    [std::f64::consts::PI, 0.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub system_id: String,
    pub system: SystemFile,
    pub l_max: f64,
    #[serde(default = "default_x0")]
    pub x0: [f64; 2],
    #[serde(default = "default_xf")]
    pub xf: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchManifest {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub planner: PlannerConfig,
    pub runs: Vec<BenchRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub system_id: String,
    pub l_max: f64,
    pub t_solve_ms: Option<f64>,
    pub k: Option<usize>,
    #[serde(rename = "lT_s")]
    pub lt_s: Option<f64>,
    pub error: String,
}

#[derive(Debug)]
pub struct BenchOutcome {
    pub rows: Vec<BenchRow>,
    pub csv: String,
    /// Exit code of the first failed row, if any.
    pub failure: Option<i32>,
}

/// Runs every manifest row; libraries and raw edges are shared between rows
/// of the same system.
pub fn run_bench(manifest: &BenchManifest) -> CliResult<BenchOutcome> {
    let mut built: HashMap<String, CliResult<(RegionLibrary, Vec<RawEdge>)>> = HashMap::new();
    let mut rows = Vec::new();
    let mut failure = None;
    for run in &manifest.runs {
        let entry = built.entry(run.system_id.clone()).or_insert_with(|| {
            let (lib, _) = run_decompose(&run.system, Some(manifest.seed))?;
            let raw = build_graph(&lib, &GraphConfig { rng_seed: manifest.seed, ..GraphConfig::default() })
                .map_err(graph_error)?;
            Ok((lib, raw))
        });
        let result = match entry {
            Ok((lib, raw)) => {
                let cfg = GraphConfig { l_max: run.l_max, rng_seed: manifest.seed, ..GraphConfig::default() };
                calibrate(lib, raw, &cfg).and_then(|g| run_plan(lib, &g, run.x0, run.xf, &manifest.planner))
            }
            Err(e) => Err(e.clone()),
        };
        let row = match result {
            Ok(sol) => BenchRow {
                system_id: run.system_id.clone(),
                l_max: run.l_max,
                t_solve_ms: Some(sol.solve_time_ms),
                k: Some(sol.k),
                lt_s: Some(sol.total_time),
                error: String::new(),
            },
            Err(e) => {
                failure.get_or_insert(e.exit_code());
                BenchRow { system_id: run.system_id.clone(), l_max: run.l_max, t_solve_ms: None, k: None, lt_s: None, error: e.to_string() }
            }
        };
        rows.push(row);
    }
    let csv = bench_csv(&rows)?;
    Ok(BenchOutcome { rows, csv, failure })
}

pub fn bench_csv(rows: &[BenchRow]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["system_id", "l_max", "t_solve_ms", "k", "lT_s", "error"]).map_err(|e| CliError::Io(e.to_string()))?;
    for r in rows {
        let opt = |v: Option<String>| v.unwrap_or_default();
        w.write_record([
            r.system_id.clone(),
            r.l_max.to_string(),
            opt(r.t_solve_ms.map(|v| format!("{v:.3}"))),
            opt(r.k.map(|v| v.to_string())),
            opt(r.lt_s.map(|v| v.to_string())),
            r.error.clone(),
        ])
        .map_err(|e| CliError::Io(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

pub fn cmd_bench(manifest_path: &Path) -> CliResult<BenchOutcome> {
    let manifest: BenchManifest = read_json(manifest_path)?;
    let started = Instant::now();
    let outcome = run_bench(&manifest)?;
    log::info!("bench finished {} rows in {:.1} s", outcome.rows.len(), started.elapsed().as_secs_f64());
    Ok(outcome)
}
