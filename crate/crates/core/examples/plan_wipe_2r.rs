//! Plans a planar 2R arm along a straight line, with and without a box
//! sitting on the line.

use std::time::Instant;

use nalgebra::Vector3;
use wipeplan::robot::{RobotDescription, SceneDescription};
use wipeplan::trajopt::{solve_ocp, CostWeights, OcpSpec, PoseTrajectory, RotationMask, SolverOptions};

fn main() -> wipeplan::Result<()> {
    let model = RobotDescription::planar_2r().build()?;
    let scene = SceneDescription::planar_one_box().build()?;
    let x0 = model.home_state.clone();
    let start = model.chain.ee_pose(&x0);
    let reference = PoseTrajectory::straight_line(
        start.translation,
        Vector3::new(1.2, -0.6, 0.0),
        start.rotation,
        4.0,
        0.1,
    )?;
    let mut spec = OcpSpec {
        model,
        obstacles: vec![],
        reference,
        x0,
        weights: CostWeights::default(),
        rotation_mask: RotationMask { roll: false, pitch: false, yaw: false },
        enforce_joint_limits: false,
    };

    for (label, obstacles) in [("free", vec![]), ("one box", scene.obstacles.clone())] {
        spec.obstacles = obstacles;
        let t0 = Instant::now();
        let res = solve_ocp(&spec, None, &SolverOptions::default())?;
        let elapsed = t0.elapsed();
        let end = spec.model.chain.ee_pose(res.states.last().unwrap()).translation;
        let target = spec.reference.samples.last().unwrap().position;
        println!(
            "{label:8} {:?}: cost {:.6e} (initial {:.3e}), iterations {} / {} outer, max violation {:.2e}, kkt {:.2e}, terminal error {:.2e} m, {:.0} ms",
            res.status,
            res.cost,
            res.initial_cost,
            res.iterations,
            res.outer_iterations,
            res.max_constraint_violation,
            res.kkt_residual,
            (end - target).norm(),
            elapsed.as_secs_f64() * 1e3
        );
    }
    Ok(())
}
