//! Single-bit-flip fault injection and Monte Carlo fault campaigns over the
//! guidance solver.
//!
//! Each trial flips one bit of one scalar at one solver stage, runs the solve
//! to completion and classifies the result twice: by outcome (did the solve
//! still succeed?) and by observability (did anything notice?).

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arbiter::{self, ArbiterConfig, ReplicaRun};
use crate::guidance::{
    reference_vertical,
    solve, solve_with_hooks, GuidanceProblem, GuidanceSolution, SolveOptions, SolveStatus,
    SolverState, Stage, StageHooks, WorksetLayout,
};
use crate::{seed, Error, Result};

/// Toggles one bit of the binary64 representation. Bit 63 is the sign,
/// 62..52 the exponent, 51..0 the fraction.
pub fn flip_bit(value: f64, bit_index: u32) -> Result<f64> {
    if bit_index > 63 {
        return Err(Error::BitIndex(bit_index));
    }
    Ok(f64::from_bits(value.to_bits() ^ (1u64 << bit_index)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BitClass {
    Sign,
    Exponent,
    Fraction,
}

impl BitClass {
    pub fn of(bit_index: u32) -> BitClass {
        match bit_index {
            63 => BitClass::Sign,
            52..=62 => BitClass::Exponent,
            _ => BitClass::Fraction,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BitClass::Sign => "SIGN",
            BitClass::Exponent => "EXPONENT",
            BitClass::Fraction => "FRACTION",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaultSite {
    InitData,
    GradientIterate { iteration: usize },
    ValidationWorkset,
    ControllerParam { step_time: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub replica_id: usize,
    pub site: FaultSite,
    pub scalar_index: usize,
    pub bit_index: u32,
    pub seed: u64,
}

/// What an injection changed. Values are kept as bit patterns so non-finite
/// results survive serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub scalar_index: usize,
    pub bit_index: u32,
    pub before_bits: u64,
    pub after_bits: u64,
}

impl InjectionRecord {
    pub fn before(&self) -> f64 {
        f64::from_bits(self.before_bits)
    }
    pub fn after(&self) -> f64 {
        f64::from_bits(self.after_bits)
    }
}

/// Flips one bit of `data[scalar_index]` in place.
pub fn inject_in_place(data: &mut [f64], scalar_index: usize, bit_index: u32) -> Result<InjectionRecord> {
    let len = data.len();
    let slot = data.get_mut(scalar_index).ok_or(Error::ScalarIndex {
        index: scalar_index,
        len,
    })?;
    let before = *slot;
    *slot = flip_bit(before, bit_index)?;
    Ok(InjectionRecord {
        scalar_index,
        bit_index,
        before_bits: before.to_bits(),
        after_bits: slot.to_bits(),
    })
}

/// Returns a copy of `data` with one bit flipped; `data` is untouched.
pub fn inject(data: &[f64], spec: &FaultSpec) -> Result<(Vec<f64>, InjectionRecord)> {
    let mut copy = data.to_vec();
    let record = inject_in_place(&mut copy, spec.scalar_index, spec.bit_index)?;
    Ok((copy, record))
}

/// Solver stage targeted by a campaign. `NoFault` runs control trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CampaignStage {
    NoFault,
    InitData,
    GradientIterate,
    ValidationWorkset,
}

impl CampaignStage {
    pub fn label(self) -> &'static str {
        match self {
            CampaignStage::NoFault => "NO_FAULT",
            CampaignStage::InitData => "INIT_DATA",
            CampaignStage::GradientIterate => "GRADIENT_ITERATE",
            CampaignStage::ValidationWorkset => "VALIDATION_WORKSET",
        }
    }

    fn ordinal(self) -> u64 {
        match self {
            CampaignStage::NoFault => 0,
            CampaignStage::InitData => 1,
            CampaignStage::GradientIterate => 2,
            CampaignStage::ValidationWorkset => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassificationTolerances {
    /// Relative fuel-cost deviation from the reference still counted as success.
    pub cost_relative: f64,
}

impl Default for ClassificationTolerances {
    fn default() -> Self {
        ClassificationTolerances { cost_relative: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Outcome {
    Success,
    Failure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Detection {
    Detected,
    Silent,
}

/// Fault-free solve that trials are compared against.
#[derive(Debug, Clone)]
pub struct Reference {
    pub solution: GuidanceSolution,
}

impl Reference {
    pub fn compute(problem: &GuidanceProblem, opts: &SolveOptions) -> Result<Self> {
        let solution = solve(problem, opts);
        if solution.status != SolveStatus::Converged || !solution.validation.passed {
            return Err(Error::ReferenceFailed(format!(
                "status {:?}, validation passed {}",
                solution.status, solution.validation.passed
            )));
        }
        Ok(Reference { solution })
    }

    pub fn iterations(&self) -> usize {
        self.solution.iterations
    }

    pub fn fuel_cost(&self) -> f64 {
        self.solution.fuel_cost
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub stage: CampaignStage,
    pub trial: usize,
    pub seed: u64,
    pub fault: Option<FaultSpec>,
    pub injection: Option<InjectionRecord>,
    pub bit_class: Option<BitClass>,
    pub status: SolveStatus,
    pub validation_passed: bool,
    pub iterations: usize,
    /// `None` when the cost is not finite.
    pub fuel_cost: Option<f64>,
    pub arbiter_dissent: bool,
    pub outcome: Outcome,
    pub detection: Detection,
}

/// Hook that performs at most one injection at the configured point.
struct Injector {
    site: CampaignStage,
    iteration: usize,
    scalar_index: usize,
    bit_index: u32,
    record: Option<Result<InjectionRecord>>,
}

impl Injector {
    fn fire(&mut self, data: &mut [f64]) {
        if self.record.is_none() {
            self.record = Some(inject_in_place(data, self.scalar_index, self.bit_index));
        }
    }
}

impl StageHooks for Injector {
    fn after_init(&mut self, state: &mut SolverState) {
        if self.site == CampaignStage::InitData {
            self.fire(&mut state.iterate);
            // The corrupted data is what the stage hands on, so it is also
            // what the stage snapshot shows.
            let snapshot = state.iterate.clone();
            if let Some(c) = state.stage_checkpoints.iter_mut().find(|c| c.stage == Stage::Init) {
                c.values = snapshot;
            }
        }
    }

    fn before_iteration(&mut self, iteration: usize, state: &mut SolverState) {
        if self.site == CampaignStage::GradientIterate && iteration == self.iteration {
            self.fire(&mut state.iterate);
        }
    }

    fn on_validation_workset(&mut self, workset: &mut [f64]) {
        if self.site == CampaignStage::ValidationWorkset {
            self.fire(workset);
        }
    }
}

fn replica_run(sol: &GuidanceSolution) -> ReplicaRun {
    ReplicaRun {
        checkpoints: sol
            .checkpoints
            .iter()
            .map(|c| arbiter::Checkpoint {
                label: c.stage.label().to_string(),
                step: c.iteration,
                payload: c.values.clone(),
            })
            .collect(),
        output: sol.to_iterate(),
    }
}

/// Votes a faulted solve against `M + 1` fault-free copies. Returns whether
/// any dissent (or quorum loss) was reported.
fn arbiter_flags(faulted: &GuidanceSolution, reference: &Reference, config: &ArbiterConfig) -> Result<bool> {
    let clean = replica_run(&reference.solution);
    let mut runs = vec![replica_run(faulted)];
    runs.extend(std::iter::repeat_n(clean, config.replica_count - 1));
    match arbiter::arbitrate_runs(&runs, config) {
        Ok(outcome) => Ok(!outcome.report.is_empty()),
        Err(Error::QuorumLost { .. }) => Ok(true),
        Err(e) => Err(e),
    }
}

/// Everything a trial needs besides its stage and seed.
#[derive(Debug, Clone, Copy)]
pub struct TrialContext<'a> {
    pub problem: &'a GuidanceProblem,
    pub reference: &'a Reference,
    pub opts: &'a SolveOptions,
    pub tolerances: &'a ClassificationTolerances,
    pub arbiter: Option<&'a ArbiterConfig>,
}

/// Runs one trial.
///
/// Bit index and scalar index are drawn uniformly from `seed`; for the
/// gradient stage the iteration is drawn uniformly from
/// `[0, reference iterations)`.
pub fn run_trial(ctx: &TrialContext<'_>, stage: CampaignStage, trial: usize, seed: u64) -> Result<TrialRecord> {
    let fault = draw_fault(ctx, stage, seed);
    run_fault(ctx, stage, trial, seed, fault)
}

/// The fault a trial with `seed` injects at `stage`; `None` for control
/// trials.
pub fn draw_fault(ctx: &TrialContext<'_>, stage: CampaignStage, seed: u64) -> Option<FaultSpec> {
    let mut rng = seed::rng(seed);
    let bit_index = rng.random_range(0..64u32);
    let (site, len) = match stage {
        CampaignStage::NoFault => return None,
        CampaignStage::InitData => (FaultSite::InitData, ctx.problem.variable_count()),
        CampaignStage::GradientIterate => {
            let iteration = rng.random_range(0..ctx.reference.iterations().max(1));
            (FaultSite::GradientIterate { iteration }, ctx.problem.variable_count())
        }
        CampaignStage::ValidationWorkset => (FaultSite::ValidationWorkset, WorksetLayout::of(ctx.problem).len()),
    };
    Some(FaultSpec {
        replica_id: 0,
        site,
        scalar_index: rng.random_range(0..len),
        bit_index,
        seed,
    })
}

/// Runs one solve with `fault` applied (or none) and classifies it.
pub fn run_fault(
    ctx: &TrialContext<'_>,
    stage: CampaignStage,
    trial: usize,
    seed: u64,
    fault: Option<FaultSpec>,
) -> Result<TrialRecord> {
    let TrialContext {
        problem,
        reference,
        opts,
        tolerances,
        arbiter,
    } = *ctx;
    let mut injector = Injector {
        site: CampaignStage::NoFault,
        iteration: 0,
        scalar_index: 0,
        bit_index: 0,
        record: None,
    };
    if let Some(f) = fault {
        if f.bit_index > 63 {
            return Err(Error::BitIndex(f.bit_index));
        }
        injector.scalar_index = f.scalar_index;
        injector.bit_index = f.bit_index;
        injector.site = match f.site {
            FaultSite::InitData => CampaignStage::InitData,
            FaultSite::GradientIterate { iteration } => {
                injector.iteration = iteration;
                CampaignStage::GradientIterate
            }
            FaultSite::ValidationWorkset => CampaignStage::ValidationWorkset,
            FaultSite::ControllerParam { .. } => {
                return Err(Error::Scenario("controller faults belong to the attitude simulation".into()))
            }
        };
    }

    let sol = solve_with_hooks(problem, opts, &mut injector);
    let injection = injector.record.transpose()?;

    let cost = sol.fuel_cost;
    let ref_cost = reference.fuel_cost();
    let cost_ok = (cost - ref_cost).abs() <= tolerances.cost_relative * ref_cost.abs();
    let outcome = if sol.status == SolveStatus::Converged && sol.validation.passed && cost_ok {
        Outcome::Success
    } else {
        Outcome::Failure
    };
    let arbiter_dissent = match arbiter {
        Some(cfg) => arbiter_flags(&sol, reference, cfg)?,
        None => false,
    };
    let detection = if !sol.validation.passed || sol.status == SolveStatus::Diverged || arbiter_dissent {
        Detection::Detected
    } else {
        Detection::Silent
    };
    Ok(TrialRecord {
        stage,
        trial,
        seed,
        fault,
        injection,
        bit_class: fault.map(|f| BitClass::of(f.bit_index)),
        status: sol.status,
        validation_passed: sol.validation.passed,
        iterations: sol.iterations,
        fuel_cost: cost.is_finite().then_some(cost),
        arbiter_dissent,
        outcome,
        detection,
    })
}

fn default_trials() -> usize {
    100
}

fn yes() -> bool {
    true
}

fn default_stages() -> Vec<CampaignStage> {
    vec![
        CampaignStage::InitData,
        CampaignStage::GradientIterate,
        CampaignStage::ValidationWorkset,
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    #[serde(default = "reference_vertical")]
    pub problem: GuidanceProblem,
    #[serde(default = "default_trials")]
    pub trials_per_stage: usize,
    #[serde(default = "default_stages")]
    pub stages: Vec<CampaignStage>,
    /// Also run `trials_per_stage` fault-free control trials.
    #[serde(default = "yes")]
    pub control: bool,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub tolerances: ClassificationTolerances,
    #[serde(default)]
    pub solve: SolveOptions,
    /// When set, each faulted solve is also voted against fault-free replicas.
    #[serde(default)]
    pub arbiter: Option<ArbiterConfig>,
}

impl CampaignConfig {
    pub fn new(problem: GuidanceProblem, trials_per_stage: usize, base_seed: u64) -> Self {
        CampaignConfig {
            problem,
            trials_per_stage,
            stages: default_stages(),
            control: true,
            base_seed,
            tolerances: ClassificationTolerances::default(),
            solve: SolveOptions::default(),
            arbiter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: CampaignStage,
    pub trials: usize,
    pub successes: usize,
    pub success_probability: f64,
    /// 95% Wilson score interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub detected_fault_rate: f64,
    pub silent_fault_rate: f64,
    pub records: Vec<TrialRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResult {
    pub schema_version: u32,
    pub base_seed: u64,
    pub trials_per_stage: usize,
    pub reference_fuel_cost: f64,
    pub reference_iterations: usize,
    /// Fault-free control trials, if requested.
    pub control: Option<StageResult>,
    pub stages: Vec<StageResult>,
}

impl CampaignResult {
    pub fn stage(&self, stage: CampaignStage) -> Option<&StageResult> {
        self.all_stages().find(|s| s.stage == stage)
    }

    /// Control stage first, then the fault stages in run order.
    pub fn all_stages(&self) -> impl Iterator<Item = &StageResult> {
        self.control.iter().chain(&self.stages)
    }

    /// One row per stage; the control stage is not included.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "stage",
            "trials",
            "successes",
            "success_probability",
            "ci_low",
            "ci_high",
            "detected_fault_rate",
            "silent_fault_rate",
        ])?;
        for s in &self.stages {
            out.write_record([
                s.stage.label().to_string(),
                s.trials.to_string(),
                s.successes.to_string(),
                s.success_probability.to_string(),
                s.ci_low.to_string(),
                s.ci_high.to_string(),
                s.detected_fault_rate.to_string(),
                s.silent_fault_rate.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Flat per-trial table.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "stage",
            "trial",
            "seed",
            "bit_index",
            "scalar_index",
            "bit_class",
            "outcome",
            "detection",
        ])?;
        for rec in self.all_stages().flat_map(|s| &s.records) {
            let (bit, scalar) = match rec.fault {
                Some(f) => (f.bit_index.to_string(), f.scalar_index.to_string()),
                None => (String::new(), String::new()),
            };
            out.write_record([
                rec.stage.label().to_string(),
                rec.trial.to_string(),
                rec.seed.to_string(),
                bit,
                scalar,
                rec.bit_class.map(|b| b.label()).unwrap_or("").to_string(),
                format!("{:?}", rec.outcome).to_uppercase(),
                format!("{:?}", rec.detection).to_uppercase(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// 95% Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let (k, n) = (k as f64, n as f64);
    let p = k / n;
    let denom = 1.0 + Z * Z / n;
    let centre = (p + Z * Z / (2.0 * n)) / denom;
    let half = Z * (p * (1.0 - p) / n + Z * Z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Seed of trial `i` at `stage`: `derive(base_seed, [stage ordinal, i])`.
pub fn trial_seed(base_seed: u64, stage: CampaignStage, trial: usize) -> u64 {
    seed::derive(base_seed, &[stage.ordinal(), trial as u64])
}

/// Runs every configured stage. Trials run in parallel; records are kept in
/// trial order so the result is a pure function of the configuration.
pub fn run_campaign(config: &CampaignConfig) -> Result<CampaignResult> {
    if config.trials_per_stage < 1 {
        return Err(Error::NoTrials);
    }
    if let Some(a) = &config.arbiter {
        a.validate()?;
    }
    let reference = Reference::compute(&config.problem, &config.solve)?;
    let ctx = TrialContext {
        problem: &config.problem,
        reference: &reference,
        opts: &config.solve,
        tolerances: &config.tolerances,
        arbiter: config.arbiter.as_ref(),
    };
    let run_stage = |stage: CampaignStage| -> Result<StageResult> {
        let records = (0..config.trials_per_stage)
            .into_par_iter()
            .map(|i| run_trial(&ctx, stage, i, trial_seed(config.base_seed, stage, i)))
            .collect::<Result<Vec<_>>>()?;
        let n = records.len();
        let successes = records.iter().filter(|r| r.outcome == Outcome::Success).count();
        let detected = records.iter().filter(|r| r.detection == Detection::Detected).count();
        let (ci_low, ci_high) = wilson_interval(successes, n);
        Ok(StageResult {
            stage,
            trials: n,
            successes,
            success_probability: successes as f64 / n as f64,
            ci_low,
            ci_high,
            detected_fault_rate: detected as f64 / n as f64,
            silent_fault_rate: (n - detected) as f64 / n as f64,
            records,
        })
    };
    let control = if config.control {
        Some(run_stage(CampaignStage::NoFault)?)
    } else {
        None
    };
    let stages = config
        .stages
        .iter()
        .map(|&s| run_stage(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(CampaignResult {
        schema_version: crate::SCHEMA_VERSION,
        base_seed: config.base_seed,
        trials_per_stage: config.trials_per_stage,
        reference_fuel_cost: reference.fuel_cost(),
        reference_iterations: reference.iterations(),
        control,
        stages,
    })
}
