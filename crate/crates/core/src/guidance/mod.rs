//! Convexified minimum-fuel powered-descent guidance, solved in three
//! separately observable stages: initialization, iterative first-order
//! updates, and final constraint validation.
//!
//! Every stage leaves a checkpoint vector on the [`SolverState`] so that
//! replicas can be compared stage by stage and faults can be injected at a
//! precise point.

mod linalg;
mod problem;
mod project;
mod solution;
mod solver;
mod validate;

pub use problem::{
    build_problem, reference_divert, reference_vertical, GuidanceProblem, Layout, ScenarioConfig,
    Vec3, VARS_PER_NODE,
};
pub use solution::{fuel_cost, GuidanceSolution, NodeState, SolveStatus, ThrustNode};
pub use solver::{
    initialize, reconstruct_trajectory, solve, solve_from, solve_with_hooks, validate, Checkpoint,
    NoHooks, SolveOptions, Solver, SolverState, Stage, StageHooks, StepSignal,
};
pub use validate::{
    propagate, summarize, validation_workset, ValidationReport, ValidationTolerances,
    WorksetLayout,
};
