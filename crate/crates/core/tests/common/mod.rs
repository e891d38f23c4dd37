#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::Rng;
use wipeplan::robot::{RobotDescription, Scene, SceneDescription};
use wipeplan::sde::{TableGeometry, WipeAction};
use wipeplan::trajopt::{CostWeights, OcpSpec, PoseTrajectory, RotationMask};

/// Uniform draw from the action box.
pub fn random_action<R: Rng>(rng: &mut R, table: &TableGeometry) -> WipeAction {
    WipeAction::new(
        rng.random_range(0.0..=table.width_m),
        rng.random_range(0.0..=table.height_m),
        rng.random_range(-PI..PI),
        rng.random_range(0.0..=table.max_wipe_length()),
    )
}

/// Planar 2R arm with unit links: tool position for joint angles `(q1, q2)`.
pub fn fk_2r(q1: f64, q2: f64) -> [f64; 2] {
    [q1.cos() + (q1 + q2).cos(), q1.sin() + (q1 + q2).sin()]
}

/// Smallest tool-position error over a uniform `n x n` grid of joint angles.
pub fn grid_ik_2r(target: [f64; 2], n: usize) -> (f64, [f64; 2]) {
    let mut best = (f64::INFINITY, [0.0; 2]);
    for a in 0..n {
        let q1 = -PI + 2.0 * PI * a as f64 / n as f64;
        for b in 0..n {
            let q2 = -PI + 2.0 * PI * b as f64 / n as f64;
            let p = fk_2r(q1, q2);
            let e = (p[0] - target[0]).hypot(p[1] - target[1]);
            if e < best.0 {
                best = (e, [q1, q2]);
            }
        }
    }
    best
}

pub const LINE_FROM: [f64; 2] = [1.2, 0.6];
pub const LINE_TO: [f64; 2] = [1.2, -0.6];

/// 2R arm tracking `LINE_FROM -> LINE_TO` over 4 s, position only.
pub fn planar_line_spec(with_box: bool) -> OcpSpec {
    let model = RobotDescription::planar_2r().build().unwrap();
    let x0 = model.home_state.clone();
    let start = model.chain.ee_pose(&x0);
    let reference = PoseTrajectory::straight_line(
        start.translation,
        Vector3::new(LINE_TO[0], LINE_TO[1], 0.0),
        start.rotation,
        4.0,
        0.1,
    )
    .unwrap();
    let scene: Scene = SceneDescription::planar_one_box().build().unwrap();
    OcpSpec {
        model,
        obstacles: if with_box { scene.obstacles } else { vec![] },
        reference,
        x0,
        weights: CostWeights::default(),
        rotation_mask: RotationMask {
            roll: false,
            pitch: false,
            yaw: false,
        },
        enforce_joint_limits: false,
    }
}
