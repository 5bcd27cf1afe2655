use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::problem::{GuidanceProblem, Vec3};
use super::solver::{Checkpoint, SolverState};
use super::validate::ValidationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub r: Vec3,
    pub v: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrustNode {
    pub u: Vec3,
    pub sigma: f64,
}

/// Result of a staged solve.
///
/// For fault-free solves `status == Converged` implies `validation.passed`.
/// A corrupted validation workset can break that implication; that is the
/// observable effect of a final-stage fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceSolution {
    pub schema_version: u32,
    pub variable_count: usize,
    pub dt: f64,
    pub trajectory: Vec<NodeState>,
    pub thrust_profile: Vec<ThrustNode>,
    pub fuel_cost: f64,
    pub status: SolveStatus,
    pub validation: ValidationReport,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub checkpoints: Vec<Checkpoint>,
    /// Wall-clock time of the solve. Not serialized so that solution files
    /// stay reproducible.
    #[serde(skip)]
    pub runtime: Duration,
}

impl GuidanceSolution {
    pub(crate) fn assemble(
        problem: &GuidanceProblem,
        state: SolverState,
        status: SolveStatus,
        validation: ValidationReport,
        runtime: Duration,
    ) -> Self {
        let lay = problem.layout();
        let x = &state.iterate;
        let trajectory = (0..lay.n)
            .map(|k| NodeState {
                r: lay.get3(x, lay.r(k)),
                v: lay.get3(x, lay.v(k)),
            })
            .collect();
        let thrust_profile = (0..lay.n)
            .map(|k| ThrustNode {
                u: lay.get3(x, lay.u(k)),
                sigma: x[lay.sigma(k)],
            })
            .collect();
        let mut sol = GuidanceSolution {
            schema_version: crate::SCHEMA_VERSION,
            variable_count: problem.variable_count(),
            dt: problem.dt(),
            trajectory,
            thrust_profile,
            fuel_cost: 0.0,
            status,
            validation,
            iterations: state.iteration_count,
            primal_residual: state.primal_residual,
            dual_residual: state.dual_residual,
            checkpoints: state.stage_checkpoints,
            runtime,
        };
        sol.fuel_cost = fuel_cost(&sol);
        sol
    }

    /// The solution as a flat iterate in `[r..., v..., u..., sigma...]` order.
    pub fn to_iterate(&self) -> Vec<f64> {
        let n = self.trajectory.len();
        let mut x = Vec::with_capacity(10 * n);
        x.extend(self.trajectory.iter().flat_map(|s| s.r));
        x.extend(self.trajectory.iter().flat_map(|s| s.v));
        x.extend(self.thrust_profile.iter().flat_map(|t| t.u));
        x.extend(self.thrust_profile.iter().map(|t| t.sigma));
        x
    }
}

/// Objective value `sum(sigma_k) * dt`, a delta-v proxy in m/s.
pub fn fuel_cost(solution: &GuidanceSolution) -> f64 {
    solution.thrust_profile.iter().map(|t| t.sigma).sum::<f64>() * solution.dt
}
