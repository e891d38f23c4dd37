//! Whole-body trajectory optimisation for a single wipe.

pub mod plan;
pub mod problem;
pub mod reference;
pub mod sqp;

pub use plan::{plan_wipe, PlanArtifact, PlanRequest, PlanStep};
pub use problem::{
    rollout, running_cost, state_residuals, ConstraintKind, CostWeights, Evaluation, OcpProblem, OcpSpec,
    RotationMask, StateResiduals,
};
pub use reference::{build_reference, build_reference_with, Phase, PoseSample, PoseTrajectory, ReferenceOptions};
pub use sqp::{solve_ocp, MeritRecord, SolveResult, SolveStatus, SolverOptions};
