//! From a table-frame wipe action to a solved whole-body trajectory.

use nalgebra::Matrix3;
use serde::Serialize;

use super::problem::{state_residuals, CostWeights, OcpSpec, RotationMask, StateResiduals};
use super::reference::{build_reference_with, Phase, ReferenceOptions};
use super::sqp::{solve_ocp, MeritRecord, SolveResult, SolveStatus, SolverOptions};
use crate::error::Result;
use crate::robot::{RobotModel, RobotState, Scene};
use crate::sde::WipeAction;

#[derive(Debug, Clone)]
pub struct PlanRequest {
    pub action: WipeAction,
    pub model: RobotModel,
    pub scene: Scene,
    pub x0: RobotState,
    /// Wipe speed along the table, m/s.
    pub speed: f64,
    pub dt: f64,
    /// Tool orientation relative to the table when `theta = 0`.
    pub tool_in_table: Matrix3<f64>,
    pub weights: CostWeights,
    pub rotation_mask: RotationMask,
    pub enforce_joint_limits: bool,
    pub reference: ReferenceOptions,
    pub solver: SolverOptions,
}

impl PlanRequest {
    pub fn ocp(&self) -> Result<OcpSpec> {
        let tool = self.model.chain.ee_pose(&self.x0);
        let reference = build_reference_with(
            &self.action,
            &self.scene.table_pose,
            &tool,
            &self.tool_in_table,
            self.speed,
            self.dt,
            &self.reference,
        )?;
        Ok(OcpSpec {
            model: self.model.clone(),
            obstacles: self.scene.obstacles.clone(),
            reference,
            x0: self.x0.clone(),
            weights: self.weights,
            rotation_mask: self.rotation_mask,
            enforce_joint_limits: self.enforce_joint_limits,
        })
    }
}

pub fn plan_wipe(request: &PlanRequest) -> Result<(OcpSpec, SolveResult)> {
    let spec = request.ocp()?;
    let result = solve_ocp(&spec, None, &request.solver)?;
    Ok((spec, result))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanStep {
    pub k: usize,
    pub time: f64,
    pub phase: Phase,
    pub state: Vec<f64>,
    pub control: Option<Vec<f64>>,
    pub ee_position: [f64; 3],
    pub ee_rotation: [[f64; 3]; 3],
    pub reference_position: [f64; 3],
    pub residuals: StateResiduals,
}

/// Serialisable record of a solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanArtifact {
    pub config_hash: String,
    pub seed: u64,
    pub robot: String,
    pub status: SolveStatus,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub outer_iterations: usize,
    pub max_constraint_violation: f64,
    pub kkt_residual: f64,
    pub terminal_position_error: f64,
    pub dt: f64,
    pub wipe_interval: Option<[f64; 2]>,
    pub steps: Vec<PlanStep>,
    pub merit_history: Vec<MeritRecord>,
}

impl PlanArtifact {
    pub fn new(spec: &OcpSpec, result: &SolveResult, config_hash: &str, seed: u64) -> Self {
        let steps: Vec<PlanStep> = result
            .states
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let ee = spec.model.chain.ee_pose(x);
                let sample = &spec.reference.samples[k];
                let r = ee.rotation;
                PlanStep {
                    k,
                    time: sample.time,
                    phase: sample.phase,
                    state: x.to_vec(),
                    control: result.controls.get(k).map(|c| c.to_vec()),
                    ee_position: ee.translation.into(),
                    ee_rotation: [
                        [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                        [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                        [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
                    ],
                    reference_position: sample.position.into(),
                    residuals: state_residuals(spec, x),
                }
            })
            .collect();
        let terminal_position_error = {
            let last = result.states.last().expect("at least one state");
            let ref_last = spec.reference.samples.last().expect("non-empty reference");
            (spec.model.chain.ee_pose(last).translation - ref_last.position).norm()
        };
        Self {
            config_hash: config_hash.to_string(),
            seed,
            robot: spec.model.name.clone(),
            status: result.status,
            cost: result.cost,
            initial_cost: result.initial_cost,
            iterations: result.iterations,
            outer_iterations: result.outer_iterations,
            max_constraint_violation: result.max_constraint_violation,
            kkt_residual: result.kkt_residual,
            terminal_position_error,
            dt: spec.dt(),
            wipe_interval: spec.reference.wipe_interval.map(|(a, b)| [a, b]),
            steps,
            merit_history: result.merit_history.clone(),
        }
    }
}
