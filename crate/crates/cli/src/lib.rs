//! Command implementations behind the `ftsc` binary.
//!
//! Each `cmd_*` function takes already-parsed arguments, writes its data
//! files plus a [`RunManifest`], and returns the process exit code. Errors
//! map to exit code 1 in `main`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use ftsc_core::acs::{self, ControllerConfig, Scenario, SimLog};
use ftsc_core::arbiter::{make_config, Comparison, Granularity, Mode};
use ftsc_core::fault::{run_campaign, CampaignConfig, CampaignResult};
use ftsc_core::guidance::{
    build_problem, reference_divert, solve, GuidanceProblem, ScenarioConfig, SolveOptions,
    SolveStatus,
};
use ftsc_core::lvs::{self, BenchConfig};

mod manifest;

pub use manifest::{FileEntry, RunManifest};
use manifest::{file_name, sibling};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: invalid JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("encoding output: {0}")]
    Encode(String),
    #[error(transparent)]
    Core(#[from] ftsc_core::Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_MAX_ITERS: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;

pub fn status_exit_code(status: SolveStatus) -> u8 {
    match status {
        SolveStatus::Converged => EXIT_OK,
        SolveStatus::MaxIters => EXIT_MAX_ITERS,
        SolveStatus::Diverged => EXIT_DIVERGED,
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Encode(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// Opens `path` for writing, runs `f`, and flushes.
fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> ftsc_core::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w)?;
    w.flush().map_err(|e| CliError::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

// ---------------------------------------------------------------- solve

/// A scenario plus optional solver settings under `"solver"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub solver: SolveOptions,
}

/// Wall-clock facts about a solve, kept out of the solution file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeRecord {
    pub schema_version: u32,
    pub status: SolveStatus,
    pub iterations: usize,
    pub variable_count: usize,
    pub runtime_seconds: f64,
}

pub fn cmd_solve(config: &Path, out: &Path) -> Result<u8> {
    let cfg: SolveConfig = read_json(config)?;
    let problem = build_problem(cfg.scenario.clone())?;
    let mut manifest = RunManifest::start("solve", &cfg, None)?;
    let solution = solve(&problem, &cfg.solver);
    create_parent(out)?;
    write_json(out, &solution)?;
    let runtime_path = sibling(out, "runtime.json");
    write_json(
        &runtime_path,
        &RuntimeRecord {
            schema_version: ftsc_core::SCHEMA_VERSION,
            status: solution.status,
            iterations: solution.iterations,
            variable_count: solution.variable_count,
            runtime_seconds: solution.runtime.as_secs_f64(),
        },
    )?;
    manifest.record(out, &file_name(out))?;
    manifest.record(&runtime_path, &file_name(&runtime_path))?;
    manifest.finish(&sibling(out, "manifest.json"))?;
    println!(
        "{:?} after {} iterations: fuel_cost {:.6}, {} variables, validation {}",
        solution.status,
        solution.iterations,
        solution.fuel_cost,
        solution.variable_count,
        if solution.validation.passed { "passed" } else { "failed" },
    );
    Ok(status_exit_code(solution.status))
}

// ---------------------------------------------------------------- campaign

pub const CAMPAIGN_JSON: &str = "campaign.json";
pub const TRIALS_CSV: &str = "trials.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
}

/// The default campaign: the vertical reference instance, 100 trials per
/// stage, seed 0.
pub fn default_campaign() -> CampaignConfig {
    CampaignConfig::new(ftsc_core::guidance::reference_vertical(), 100, 0)
}

pub fn cmd_campaign(config: Option<&Path>, out_dir: &Path, overrides: &Overrides) -> Result<u8> {
    let mut cfg = match config {
        Some(p) => read_json(p)?,
        None => default_campaign(),
    };
    if let Some(s) = overrides.seed {
        cfg.base_seed = s;
    }
    if let Some(t) = overrides.trials {
        cfg.trials_per_stage = t;
    }
    let result = run_campaign_to(&cfg, out_dir)?;
    for s in result.all_stages() {
        println!(
            "{:<20} P(success) {:.2} [{:.2}, {:.2}]  silent {:.2}",
            s.stage.label(),
            s.success_probability,
            s.ci_low,
            s.ci_high,
            s.silent_fault_rate
        );
    }
    Ok(EXIT_OK)
}

/// Runs a campaign and writes its files into `out_dir`.
pub fn run_campaign_to(cfg: &CampaignConfig, out_dir: &Path) -> Result<CampaignResult> {
    let mut manifest = RunManifest::start("campaign", cfg, Some(cfg.base_seed))?;
    let result = run_campaign(cfg)?;
    create_dir(out_dir)?;
    let json = out_dir.join(CAMPAIGN_JSON);
    write_json(&json, &result)?;
    let trials = out_dir.join(TRIALS_CSV);
    write_with(&trials, |w| result.write_csv(w))?;
    let summary = out_dir.join(SUMMARY_CSV);
    write_with(&summary, |w| result.write_summary_csv(w))?;
    for name in [CAMPAIGN_JSON, TRIALS_CSV, SUMMARY_CSV] {
        manifest.record(&out_dir.join(name), name)?;
    }
    manifest.finish(&out_dir.join(MANIFEST_JSON))?;
    Ok(result)
}

// ---------------------------------------------------------------- acs

pub const SIMLOG_CSV: &str = "simlog.csv";
pub const FAULT_REPORT_JSONL: &str = "fault_report.jsonl";
pub const ACS_SUMMARY_JSON: &str = "summary.json";

fn two() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcsConfig {
    #[serde(default = "Scenario::demo")]
    pub scenario: Scenario,
    #[serde(default)]
    pub controller: ControllerConfig,
    /// Replicas run = faults_to_catch + 2.
    #[serde(default = "two")]
    pub faults_to_catch: usize,
}

impl Default for AcsConfig {
    fn default() -> Self {
        AcsConfig {
            scenario: Scenario::demo(),
            controller: ControllerConfig::default(),
            faults_to_catch: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub replica: usize,
    pub first_dissent: Option<f64>,
    /// Fraction of periods from the first dissent on in which it dissented.
    pub dissent_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcsSummary {
    pub schema_version: u32,
    pub steps: usize,
    pub period: f64,
    pub matches_reference: bool,
    pub quorum_lost_steps: usize,
    pub replicas: Vec<ReplicaSummary>,
}

impl AcsSummary {
    pub fn of(log: &SimLog) -> Self {
        AcsSummary {
            schema_version: ftsc_core::SCHEMA_VERSION,
            steps: log.records.len(),
            period: log.period,
            matches_reference: log.matches_reference(),
            quorum_lost_steps: log.records.iter().filter(|r| !r.quorum_met).count(),
            replicas: (0..log.replica_count)
                .map(|i| {
                    let first = log.first_dissent(i);
                    ReplicaSummary {
                        replica: i,
                        first_dissent: first,
                        dissent_fraction: first.map_or(0.0, |t| log.dissent_fraction(i, t)),
                    }
                })
                .collect(),
        }
    }
}

pub fn cmd_acs(config: Option<&Path>, out_dir: &Path, seed: Option<u64>) -> Result<u8> {
    let mut cfg: AcsConfig = match config {
        Some(p) => read_json(p)?,
        None => AcsConfig::default(),
    };
    if let Some(s) = seed {
        cfg.scenario.seed = s;
    }
    let (_, summary) = run_acs_to(&cfg, out_dir)?;
    for r in &summary.replicas {
        match r.first_dissent {
            Some(t) => println!("replica {} first dissent at {t:.3} s ({:.0}% of later steps)", r.replica, 100.0 * r.dissent_fraction),
            None => println!("replica {} never dissented", r.replica),
        }
    }
    println!(
        "arbitrated commands {} the fault-free reference; quorum lost in {} of {} steps",
        if summary.matches_reference { "match" } else { "differ from" },
        summary.quorum_lost_steps,
        summary.steps
    );
    Ok(EXIT_OK)
}

/// Runs the ACS simulation and writes its files into `out_dir`. Quorum loss
/// is a logged outcome, not an error.
pub fn run_acs_to(cfg: &AcsConfig, out_dir: &Path) -> Result<(SimLog, AcsSummary)> {
    let mut manifest = RunManifest::start("acs", cfg, Some(cfg.scenario.seed))?;
    let arb = make_config(cfg.faults_to_catch, Mode::Dynamic, Comparison::Exact, Granularity::FinalOnly)?;
    let log = acs::simulate(&cfg.scenario, &cfg.controller, &arb)?;
    let summary = AcsSummary::of(&log);
    create_dir(out_dir)?;
    write_with(&out_dir.join(SIMLOG_CSV), |w| log.write_csv(w))?;
    write_with(&out_dir.join(FAULT_REPORT_JSONL), |w| log.report.write_jsonl(w))?;
    write_json(&out_dir.join(ACS_SUMMARY_JSON), &summary)?;
    for name in [SIMLOG_CSV, FAULT_REPORT_JSONL, ACS_SUMMARY_JSON] {
        manifest.record(&out_dir.join(name), name)?;
    }
    manifest.finish(&out_dir.join(MANIFEST_JSON))?;
    Ok((log, summary))
}

// ---------------------------------------------------------------- lvs-bench

/// Largest image edge at which `--oracle` adds comparison rows.
pub const ORACLE_MAX_SIZE: usize = 16;

pub fn cmd_lvs_bench(cfg: &BenchConfig, out: &Path) -> Result<u8> {
    let mut manifest = RunManifest::start("lvs-bench", cfg, Some(cfg.seed))?;
    let rows = lvs::bench(cfg)?;
    create_parent(out)?;
    write_with(out, |w| lvs::write_timing_csv(&rows, w))?;
    manifest.record(out, &file_name(out))?;
    manifest.finish(&sibling(out, "manifest.json"))?;
    for r in &rows {
        match r.max_deviation {
            Some(d) => println!("{:<18} {:>5}  max deviation {d:.3e}", r.op.label(), r.size),
            None => println!("{:<18} {:>5}  {:.6} s", r.op.label(), r.size, r.median_seconds),
        }
    }
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------- scaling

pub const DEFAULT_LADDER: [usize; 4] = [10, 40, 110, 220];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub nodes: usize,
    pub variables: usize,
    pub status: SolveStatus,
    pub iterations: usize,
    pub fuel_cost: f64,
    pub reps: usize,
    pub median_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    /// Base instance; each rung keeps its horizon and changes the node
    /// count. Defaults to the 45 s divert.
    pub scenario: Option<ScenarioConfig>,
    pub ladder: Vec<usize>,
    pub reps: usize,
    pub solver: SolveOptions,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            scenario: None,
            ladder: DEFAULT_LADDER.to_vec(),
            reps: 3,
            solver: SolveOptions::default(),
        }
    }
}

fn rung(cfg: &ScalingConfig, n: usize) -> Result<GuidanceProblem> {
    Ok(match &cfg.scenario {
        Some(s) => build_problem(s.clone())?.with_nodes(n)?,
        None => reference_divert(n)?,
    })
}

/// Solves each rung `reps` times and reports the median wall-clock time.
pub fn run_scaling(cfg: &ScalingConfig) -> Result<Vec<ScalingRow>> {
    if cfg.reps == 0 {
        return Err(CliError::Usage("--reps must be at least 1".into()));
    }
    if cfg.ladder.is_empty() {
        return Err(CliError::Usage("--ladder must name at least one node count".into()));
    }
    let mut rows = Vec::with_capacity(cfg.ladder.len());
    for &n in &cfg.ladder {
        let problem = rung(cfg, n)?;
        let mut times = Vec::with_capacity(cfg.reps);
        let mut last = None;
        for _ in 0..cfg.reps {
            let t = Instant::now();
            let sol = solve(&problem, &cfg.solver);
            times.push(t.elapsed().as_secs_f64());
            last = Some(sol);
        }
        let sol = last.expect("reps >= 1");
        times.sort_by(f64::total_cmp);
        let m = times.len();
        let median = if m % 2 == 1 {
            times[m / 2]
        } else {
            0.5 * (times[m / 2 - 1] + times[m / 2])
        };
        rows.push(ScalingRow {
            nodes: n,
            variables: problem.variable_count(),
            status: sol.status,
            iterations: sol.iterations,
            fuel_cost: sol.fuel_cost,
            reps: cfg.reps,
            median_seconds: median,
        });
    }
    Ok(rows)
}

pub fn write_scaling_csv<W: Write>(rows: &[ScalingRow], w: W) -> ftsc_core::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["nodes", "variables", "status", "iterations", "fuel_cost", "reps", "median_seconds"])?;
    for r in rows {
        out.write_record([
            r.nodes.to_string(),
            r.variables.to_string(),
            format!("{:?}", r.status).to_uppercase(),
            r.iterations.to_string(),
            r.fuel_cost.to_string(),
            r.reps.to_string(),
            r.median_seconds.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn cmd_scaling(cfg: &ScalingConfig, out: &Path) -> Result<u8> {
    let mut manifest = RunManifest::start("scaling", cfg, None)?;
    let rows = run_scaling(cfg)?;
    create_parent(out)?;
    write_with(out, |w| write_scaling_csv(&rows, w))?;
    manifest.record(out, &file_name(out))?;
    manifest.finish(&sibling(out, "manifest.json"))?;
    for r in &rows {
        println!(
            "N={:<4} {:>5} variables  {:?} in {} iterations  median {:.4} s",
            r.nodes, r.variables, r.status, r.iterations, r.median_seconds
        );
    }
    Ok(EXIT_OK)
}

/// Parses a comma-separated list such as `10,40,110`.
pub fn parse_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| CliError::Usage(format!("not a non-negative integer: {s:?}")))
        })
        .collect()
}
