use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::linalg::{BandedCholesky, SparseRows};
use super::problem::{norm3, GuidanceProblem, Layout, Vec3};
use super::project::{project_cone, project_thrust};
use super::solution::{GuidanceSolution, SolveStatus};
use super::validate::{
    propagate, summarize, validation_workset, ValidationReport, ValidationTolerances,
};
use crate::{Error, Result};

/// The three computational stages of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Stage {
    Init,
    Gradient,
    Validate,
}

impl Stage {
    pub fn label(self) -> &'static str {
        match self {
            Stage::Init => "INIT",
            Stage::Gradient => "GRADIENT",
            Stage::Validate => "VALIDATE",
        }
    }
}

/// Immutable snapshot taken when a stage completes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub stage: Stage,
    pub iteration: usize,
    pub values: Vec<f64>,
}

/// Solver iterate between stages.
///
/// `iterate` is the primal vector in physical units with the fixed
/// `[r..., v..., u..., sigma...]` ordering. `dual_iterate` is the scaled
/// dual of the splitting, one entry per primal variable. `penalty` is the
/// current multiplier on the base splitting penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub iterate: Vec<f64>,
    pub dual_iterate: Vec<f64>,
    pub iteration_count: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    #[serde(default = "unit")]
    pub penalty: f64,
    pub stage_checkpoints: Vec<Checkpoint>,
}

fn unit() -> f64 {
    1.0
}

impl SolverState {
    /// Starts from an arbitrary primal guess with a zero dual.
    pub fn from_iterate(problem: &GuidanceProblem, iterate: Vec<f64>) -> Result<Self> {
        let expected = problem.variable_count();
        if iterate.len() != expected {
            return Err(Error::IterateLength {
                expected,
                got: iterate.len(),
            });
        }
        Ok(SolverState {
            dual_iterate: vec![0.0; iterate.len()],
            iterate,
            iteration_count: 0,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            penalty: 1.0,
            stage_checkpoints: Vec::new(),
        })
    }

    pub fn record(&mut self, stage: Stage, values: Vec<f64>) {
        self.stage_checkpoints.push(Checkpoint {
            stage,
            iteration: self.iteration_count,
            values,
        });
    }

    pub fn checkpoint(&self, stage: Stage) -> Option<&Checkpoint> {
        self.stage_checkpoints.iter().find(|c| c.stage == stage)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    /// Primal and dual residual tolerance on the scaled problem.
    pub tolerance: f64,
    pub max_iters: usize,
    /// Initial splitting penalty relative to the scaled step duration.
    pub penalty_scale: f64,
    /// Iterations between penalty rebalancing; 0 keeps it fixed.
    pub penalty_adapt_interval: usize,
    /// Record a `GRADIENT` checkpoint every this many iterations, in
    /// addition to the one taken when the loop ends; 0 records only the last.
    pub checkpoint_interval: usize,
    /// Over-relaxation factor in (0, 2).
    pub relaxation: f64,
    pub validation: ValidationTolerances,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tolerance: 1e-6,
            max_iters: 20_000,
            penalty_scale: 0.1,
            penalty_adapt_interval: 50,
            checkpoint_interval: 0,
            relaxation: 1.6,
            validation: ValidationTolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepSignal {
    Continue,
    Diverged,
}

/// Observation and mutation points around the solver stages. Fault injection
/// and replica snapshotting are built on these; the default methods do
/// nothing.
pub trait StageHooks {
    fn after_init(&mut self, _state: &mut SolverState) {}
    fn before_iteration(&mut self, _iteration: usize, _state: &mut SolverState) {}
    fn after_iteration(&mut self, _state: &SolverState) {}
    fn on_validation_workset(&mut self, _workset: &mut [f64]) {}
}

pub struct NoHooks;
impl StageHooks for NoHooks {}

/// Nondimensionalization: positions by `max(1, |r0 - r_target|)`,
/// accelerations by `rho2`, and time by `sqrt(L / rho2)` so that the
/// dynamics keep their form.
#[derive(Debug, Clone)]
struct Scaling {
    length: f64,
    time: f64,
    /// Multiplier taking each physical entry of the iterate to scaled units.
    to_scaled: Vec<f64>,
    to_physical: Vec<f64>,
}

impl Scaling {
    fn new(problem: &GuidanceProblem) -> Self {
        let d = sub(problem.r0(), problem.r_target());
        let length = norm3(d).max(1.0);
        let accel = problem.rho2();
        let time = (length / accel).sqrt();
        let speed = length / time;
        let lay = problem.layout();
        let mut to_physical = vec![0.0; lay.len()];
        to_physical[lay.r(0)..lay.v(0)].fill(length);
        to_physical[lay.v(0)..lay.u(0)].fill(speed);
        to_physical[lay.u(0)..].fill(accel);
        let to_scaled = to_physical.iter().map(|s| 1.0 / s).collect();
        Scaling {
            length,
            time,
            to_scaled,
            to_physical,
        }
    }

    fn accel(&self) -> f64 {
        self.length / (self.time * self.time)
    }
    fn speed(&self) -> f64 {
        self.length / self.time
    }
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// A problem prepared for iteration: scaling, equality constraints and the
/// factorization used to project onto them.
///
/// Each [`Solver::gradient_step`] is one over-relaxed ADMM (Douglas-Rachford)
/// update on the split `x = z`, with `x` constrained to the affine dynamics
/// and boundary conditions and `z` to the per-node cones and thrust bounds:
///
/// ```text
/// x  = Proj_affine(z - w - c / rho)
/// x' = alpha x + (1 - alpha) z
/// z+ = Proj_cones(x' + w)
/// w+ = w + x' - z+
/// ```
///
/// The primal residual is `|x - z+|_inf` and the dual residual
/// `rho |z+ - z|_inf`, both in scaled units. `z` is exposed as the iterate.
#[derive(Debug, Clone)]
pub struct Solver {
    problem: GuidanceProblem,
    opts: SolveOptions,
    scaling: Scaling,
    constraints: SparseRows,
    factor: BandedCholesky,
    /// Scaled objective coefficients divided by the base penalty.
    cost_over_rho: Vec<f64>,
    rho: f64,
    rho1_s: f64,
    rho2_s: f64,
    rt_s: Vec3,
    glide_cot: Option<f64>,
}

impl Solver {
    #[allow(clippy::needless_range_loop)]
    pub fn new(problem: &GuidanceProblem, opts: &SolveOptions) -> Self {
        let scaling = Scaling::new(problem);
        let lay = problem.layout();
        let n = lay.n;
        let dt = problem.dt() / scaling.time;
        let g = problem.g().map(|x| x / scaling.accel());
        let r0 = problem.r0().map(|x| x / scaling.length);
        let v0 = problem.v0().map(|x| x / scaling.speed());
        let rt = problem.r_target().map(|x| x / scaling.length);
        let vt = problem.v_target().map(|x| x / scaling.speed());
        let h = 0.5 * dt * dt;

        let mut a = SparseRows::new(lay.len());
        for i in 0..3 {
            a.push(vec![(lay.r(0) + i, 1.0)], r0[i]);
            a.push(vec![(lay.v(0) + i, 1.0)], v0[i]);
        }
        for k in 0..n - 1 {
            for i in 0..3 {
                a.push(
                    vec![
                        (lay.r(k) + i, -1.0),
                        (lay.v(k) + i, -dt),
                        (lay.u(k) + i, -h),
                        (lay.r(k + 1) + i, 1.0),
                    ],
                    h * g[i],
                );
                a.push(
                    vec![
                        (lay.v(k) + i, -1.0),
                        (lay.u(k) + i, -dt),
                        (lay.v(k + 1) + i, 1.0),
                    ],
                    dt * g[i],
                );
            }
        }
        for i in 0..3 {
            a.push(vec![(lay.r(n - 1) + i, 1.0)], rt[i]);
            a.push(vec![(lay.v(n - 1) + i, 1.0)], vt[i]);
        }

        // With N = 2 the boundary rows over-determine the single thrust node
        // and A A^T is singular; a tiny ridge keeps the projection defined.
        let factor = BandedCholesky::gram(&a).unwrap_or_else(|_| {
            let ridge = |i: usize, j: usize| a.row_dot(i, j) + if i == j { 1e-10 } else { 0.0 };
            BandedCholesky::factor(a.len(), a.gram_bandwidth(), ridge)
                .expect("ridge-regularized Gram matrix is positive definite")
        });

        let rho = opts.penalty_scale * dt;
        let mut cost_over_rho = vec![0.0; lay.len()];
        cost_over_rho[lay.sigma(0)..].fill(dt / rho);

        Solver {
            problem: problem.clone(),
            opts: *opts,
            rho1_s: problem.rho1() / scaling.accel(),
            rho2_s: problem.rho2() / scaling.accel(),
            rt_s: rt,
            glide_cot: problem.glide_slope_angle().map(|a| 1.0 / a.tan()),
            scaling,
            constraints: a,
            factor,
            cost_over_rho,
            rho,
        }
    }

    pub fn problem(&self) -> &GuidanceProblem {
        &self.problem
    }

    pub fn options(&self) -> &SolveOptions {
        &self.opts
    }

    /// Exactly one splitting update. Deterministic: identical inputs give
    /// bit-identical outputs.
    pub fn gradient_step(&self, state: &mut SolverState) -> StepSignal {
        let lay = self.problem.layout();
        let z: Vec<f64> = state
            .iterate
            .iter()
            .zip(&self.scaling.to_scaled)
            .map(|(x, s)| x * s)
            .collect();
        let penalty = state.penalty;
        let w = &mut state.dual_iterate;

        let mut x: Vec<f64> = z
            .iter()
            .zip(w.iter())
            .zip(&self.cost_over_rho)
            .map(|((z, w), c)| z - w - c / penalty)
            .collect();
        let mut y = vec![0.0; self.constraints.len()];
        self.constraints.residual(&x, &mut y);
        self.factor.solve_in_place(&mut y);
        self.constraints.sub_transpose(&y, &mut x);

        let alpha = self.opts.relaxation;
        let relaxed: Vec<f64> = x
            .iter()
            .zip(&z)
            .map(|(x, z)| alpha * x + (1.0 - alpha) * z)
            .collect();
        let mut zn: Vec<f64> = relaxed.iter().zip(w.iter()).map(|(a, b)| a + b).collect();
        self.project(&mut zn, lay);
        for ((w, r), z) in w.iter_mut().zip(&relaxed).zip(&zn) {
            *w += r - z;
        }

        let primal = max_abs_diff(&x, &zn);
        let dual = self.rho * penalty * max_abs_diff(&zn, &z);
        for ((dst, z), s) in state
            .iterate
            .iter_mut()
            .zip(&zn)
            .zip(&self.scaling.to_physical)
        {
            *dst = z * s;
        }
        state.iteration_count += 1;
        state.primal_residual = primal;
        state.dual_residual = dual;
        self.rebalance(state);

        let finite = state.iterate.iter().all(|x| x.is_finite())
            && state.dual_iterate.iter().all(|x| x.is_finite());
        if finite && primal.is_finite() && dual.is_finite() {
            StepSignal::Continue
        } else {
            StepSignal::Diverged
        }
    }

    /// Residual balancing. A primal residual far above the dual residual
    /// means `z` has stalled while the dual drifts; doubling the penalty
    /// breaks the plateau. Once raised, the penalty is halved again when the
    /// dual residual dominates. The scaled dual is rescaled so the unscaled
    /// multiplier is unchanged.
    fn rebalance(&self, state: &mut SolverState) {
        const RAISE_RATIO: f64 = 1e3;
        const LOWER_RATIO: f64 = 10.0;
        const FACTOR: f64 = 2.0;
        const CEILING: f64 = 1e4;
        let every = self.opts.penalty_adapt_interval;
        if every == 0 || state.iteration_count % every != 0 {
            return;
        }
        let (p, d) = (state.primal_residual, state.dual_residual);
        let scale = if p > RAISE_RATIO * d && state.penalty * FACTOR <= CEILING {
            FACTOR
        } else if d > LOWER_RATIO * p && state.penalty > 1.0 {
            1.0 / FACTOR
        } else {
            return;
        };
        state.penalty *= scale;
        state.dual_iterate.iter_mut().for_each(|w| *w /= scale);
    }

    fn project(&self, z: &mut [f64], lay: Layout) {
        for k in 0..lay.n {
            let iu = lay.u(k);
            let mut u = [z[iu], z[iu + 1], z[iu + 2]];
            let mut s = z[lay.sigma(k)];
            project_thrust(&mut u, &mut s, self.rho1_s, self.rho2_s);
            z[iu..iu + 3].copy_from_slice(&u);
            z[lay.sigma(k)] = s;

            if let Some(cot) = self.glide_cot {
                let ir = lay.r(k);
                let rt = self.rt_s;
                let mut horiz = [z[ir] - rt[0], z[ir + 1] - rt[1]];
                let mut up = z[ir + 2] - rt[2];
                project_cone(&mut horiz, &mut up, cot);
                z[ir] = rt[0] + horiz[0];
                z[ir + 1] = rt[1] + horiz[1];
                z[ir + 2] = rt[2] + up;
            }
        }
    }

    /// Replaces the position and velocity blocks with the forward simulation
    /// of the thrust block from `(r0, v0)`, so the dynamics hold exactly and
    /// any remaining infeasibility shows up as terminal error.
    pub fn reconstruct_trajectory(&self, iterate: &mut [f64]) {
        reconstruct_trajectory(&self.problem, iterate);
    }

    /// The termination test: scaled residuals within the current target and
    /// a reconstructed trajectory that passes validation.
    fn terminal_ok(&self, state: &SolverState) -> bool {
        let mut trial = state.iterate.clone();
        self.reconstruct_trajectory(&mut trial);
        let workset = validation_workset(&trial, &self.problem);
        summarize(&workset, &self.problem, &self.opts.validation).passed
    }

    /// Runs the full staged solve from `state`, which must already hold its
    /// `INIT` checkpoint.
    pub fn run(&self, mut state: SolverState, hooks: &mut dyn StageHooks) -> GuidanceSolution {
        let start = Instant::now();
        let mut target = self.opts.tolerance;
        let status = loop {
            if state.iteration_count >= self.opts.max_iters {
                break SolveStatus::MaxIters;
            }
            hooks.before_iteration(state.iteration_count, &mut state);
            if self.gradient_step(&mut state) == StepSignal::Diverged {
                break SolveStatus::Diverged;
            }
            hooks.after_iteration(&state);
            let every = self.opts.checkpoint_interval;
            if every > 0 && state.iteration_count % every == 0 {
                let snapshot = state.iterate.clone();
                state.record(Stage::Gradient, snapshot);
            }
            if state.primal_residual <= target && state.dual_residual <= target {
                if self.terminal_ok(&state) {
                    break SolveStatus::Converged;
                }
                // Residuals are scaled; tighten until the physical
                // thresholds are met.
                target *= 0.1;
            }
        };
        self.reconstruct_trajectory(&mut state.iterate);
        let snapshot = state.iterate.clone();
        state.record(Stage::Gradient, snapshot);
        let validation = validate_with_hooks(&mut state, &self.problem, &self.opts.validation, hooks);
        let runtime = start.elapsed();
        GuidanceSolution::assemble(&self.problem, state, status, validation, runtime)
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| {
        let d = (x - y).abs();
        if d.is_nan() || m.is_nan() {
            f64::NAN
        } else {
            m.max(d)
        }
    })
}

pub fn reconstruct_trajectory(problem: &GuidanceProblem, iterate: &mut [f64]) {
    let lay = problem.layout();
    let (g, dt) = (problem.g(), problem.dt());
    let (mut r, mut v) = (problem.r0(), problem.v0());
    lay.set3(iterate, lay.r(0), r);
    lay.set3(iterate, lay.v(0), v);
    for k in 0..lay.n - 1 {
        let u = lay.get3(iterate, lay.u(k));
        (r, v) = propagate(r, v, u, g, dt);
        lay.set3(iterate, lay.r(k + 1), r);
        lay.set3(iterate, lay.v(k + 1), v);
    }
}

/// Initialization stage.
///
/// Positions and velocities are interpolated linearly between the boundary
/// states, every thrust node is set to the gravity-cancelling `-g` with its
/// magnitude clipped into `[rho1, rho2]`, and each slack equals its thrust
/// magnitude. With `g = 0` and `rho1 > 0` the guess points along `+z`.
pub fn initialize(problem: &GuidanceProblem) -> SolverState {
    let lay = problem.layout();
    let n = lay.n;
    let mut x = vec![0.0; lay.len()];
    let (r0, rt, v0, vt) = (
        problem.r0(),
        problem.r_target(),
        problem.v0(),
        problem.v_target(),
    );
    let mut u = problem.g().map(|c| -c);
    let mag = norm3(u);
    let (lo, hi) = (problem.rho1(), problem.rho2());
    if mag > hi {
        u = u.map(|c| c * hi / mag);
    } else if mag < lo {
        u = if mag > 0.0 {
            u.map(|c| c * lo / mag)
        } else {
            [0.0, 0.0, lo]
        };
    }
    let sigma = norm3(u);
    for k in 0..n {
        let s = k as f64 / (n - 1) as f64;
        let lerp = |a: Vec3, b: Vec3| [0, 1, 2].map(|i| if k == n - 1 { b[i] } else { a[i] + s * (b[i] - a[i]) });
        lay.set3(&mut x, lay.r(k), lerp(r0, rt));
        lay.set3(&mut x, lay.v(k), lerp(v0, vt));
        lay.set3(&mut x, lay.u(k), u);
        x[lay.sigma(k)] = sigma;
    }
    let mut state = SolverState::from_iterate(problem, x).expect("length is 10N by construction");
    let snapshot = state.iterate.clone();
    state.record(Stage::Init, snapshot);
    state
}

/// Final constraint validation of `state.iterate`; records the `VALIDATE`
/// checkpoint (report vector followed by the full workset).
pub fn validate(
    state: &mut SolverState,
    problem: &GuidanceProblem,
    tolerances: &ValidationTolerances,
) -> ValidationReport {
    validate_with_hooks(state, problem, tolerances, &mut NoHooks)
}

fn validate_with_hooks(
    state: &mut SolverState,
    problem: &GuidanceProblem,
    tolerances: &ValidationTolerances,
    hooks: &mut dyn StageHooks,
) -> ValidationReport {
    let mut workset = validation_workset(&state.iterate, problem);
    hooks.on_validation_workset(&mut workset);
    let report = summarize(&workset, problem, tolerances);
    let mut values = report.to_vector();
    values.extend_from_slice(&workset);
    state.record(Stage::Validate, values);
    report
}

/// Orchestrates initialize, repeated gradient steps and validation.
pub fn solve(problem: &GuidanceProblem, opts: &SolveOptions) -> GuidanceSolution {
    solve_with_hooks(problem, opts, &mut NoHooks)
}

pub fn solve_with_hooks(
    problem: &GuidanceProblem,
    opts: &SolveOptions,
    hooks: &mut dyn StageHooks,
) -> GuidanceSolution {
    let start = Instant::now();
    let solver = Solver::new(problem, opts);
    let mut state = initialize(problem);
    hooks.after_init(&mut state);
    let mut sol = solver.run(state, hooks);
    sol.runtime = start.elapsed();
    sol
}

/// Solves from a caller-supplied starting state (alternative initial guess).
pub fn solve_from(
    problem: &GuidanceProblem,
    mut state: SolverState,
    opts: &SolveOptions,
) -> GuidanceSolution {
    let start = Instant::now();
    let solver = Solver::new(problem, opts);
    if state.checkpoint(Stage::Init).is_none() {
        let snapshot = state.iterate.clone();
        state.record(Stage::Init, snapshot);
    }
    let mut sol = solver.run(state, &mut NoHooks);
    sol.runtime = start.elapsed();
    sol
}
