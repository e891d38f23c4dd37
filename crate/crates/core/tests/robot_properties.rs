use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use wipeplan::robot::{
    dynamics_jacobians, dynamics_step, facet_index, obstacle_residual, ControlInput, PolytopeObstacle,
    RobotDescription, RobotModel, RobotState, Sphere,
};

fn generic() -> RobotModel {
    RobotDescription::generic_7dof().build().unwrap()
}

fn state(dof: usize) -> impl Strategy<Value = RobotState> {
    (
        -2.0..2.0f64,
        -2.0..2.0f64,
        -3.2..3.2f64,
        prop::collection::vec(-3.0..3.0f64, dof),
    )
        .prop_map(|(rx, ry, psi, q)| RobotState { rx, ry, psi, q })
}

fn control(dof: usize) -> impl Strategy<Value = ControlInput> {
    (-1.0..1.0f64, -1.0..1.0f64, prop::collection::vec(-1.0..1.0f64, dof))
        .prop_map(|(ur, upsi, qdot)| ControlInput { ur, upsi, qdot })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn link_rotations_stay_orthonormal(x in state(7)) {
        let m = generic();
        for link in m.chain.forward(&x).links {
            prop_assert!(link.orthonormality_error() < 1e-9);
        }
    }

    #[test]
    fn point_jacobian_matches_finite_differences(x in state(7), link in 0usize..9, off in prop::array::uniform3(-0.2..0.2f64)) {
        let m = generic();
        let fk = m.chain.forward(&x);
        let local = Vector3::from(off);
        let p = fk.links[link].apply(&local);
        let jac = fk.point_jacobian(link, &p);
        let v = x.to_vec();
        let h = 1e-6;
        for k in 0..v.len() {
            let (mut up, mut dn) = (v.clone(), v.clone());
            up[k] += h;
            dn[k] -= h;
            let pu = m.chain.forward(&RobotState::from_slice(&up)).links[link].apply(&local);
            let pd = m.chain.forward(&RobotState::from_slice(&dn)).links[link].apply(&local);
            let fd = (pu - pd) / (2.0 * h);
            for r in 0..3 {
                prop_assert!((jac[(r, k)] - fd[r]).abs() < 1e-6, "link {link} coord {k}: {} vs {}", jac[(r, k)], fd[r]);
            }
        }
    }

    #[test]
    fn rotation_derivatives_match_finite_differences(x in state(7), link in 0usize..9) {
        let m = generic();
        let d = m.chain.forward(&x).rotation_derivatives(link);
        let v = x.to_vec();
        let h = 1e-6;
        for (k, dk) in d.iter().enumerate() {
            let (mut up, mut dn) = (v.clone(), v.clone());
            up[k] += h;
            dn[k] -= h;
            let ru = m.chain.forward(&RobotState::from_slice(&up)).links[link].rotation;
            let rd = m.chain.forward(&RobotState::from_slice(&dn)).links[link].rotation;
            let fd: Matrix3<f64> = (ru - rd) / (2.0 * h);
            prop_assert!((dk - fd).abs().max() < 1e-6);
        }
    }

    #[test]
    fn dynamics_jacobians_match_finite_differences(x in state(3), u in control(3), dt in 0.01..0.3f64) {
        let (a, b) = dynamics_jacobians(&x, &u, dt);
        let xv = x.to_vec();
        let uv = u.to_vec();
        let h = 1e-6;
        for k in 0..xv.len() {
            let (mut up, mut dn) = (xv.clone(), xv.clone());
            up[k] += h;
            dn[k] -= h;
            let fu = dynamics_step(&RobotState::from_slice(&up), &u, dt).to_vec();
            let fdn = dynamics_step(&RobotState::from_slice(&dn), &u, dt).to_vec();
            for r in 0..xv.len() {
                prop_assert!((a[(r, k)] - (fu[r] - fdn[r]) / (2.0 * h)).abs() < 1e-8);
            }
        }
        for k in 0..uv.len() {
            let (mut up, mut dn) = (uv.clone(), uv.clone());
            up[k] += h;
            dn[k] -= h;
            let fu = dynamics_step(&x, &ControlInput::from_slice(&up), dt).to_vec();
            let fdn = dynamics_step(&x, &ControlInput::from_slice(&dn), dt).to_vec();
            for r in 0..xv.len() {
                prop_assert!((b[(r, k)] - (fu[r] - fdn[r]) / (2.0 * h)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn base_moves_along_heading_only(x in state(2), u in control(2), dt in 0.01..0.3f64) {
        let next = dynamics_step(&x, &u, dt);
        let (dx, dy) = (next.rx - x.rx, next.ry - x.ry);
        prop_assert!((dx * x.psi.sin() - dy * x.psi.cos()).abs() < 1e-12);
    }

    #[test]
    fn box_residual_is_a_lower_bound_on_clearance(
        center in prop::array::uniform3(-1.0..1.0f64),
        half in prop::array::uniform3(0.05..0.5f64),
        p in prop::array::uniform3(-2.0..2.0f64),
        r in 0.0..0.5f64,
    ) {
        let ob = PolytopeObstacle::from_box(center, half).unwrap();
        let c = Vector3::from(p);
        prop_assume!((c - ob.center()).norm() > 1e-6);
        let res = obstacle_residual(&ob, &Sphere { center: c, radius: r }).unwrap();
        // Exact distance from the sphere centre to an axis-aligned box.
        let d = (0..3)
            .map(|i| ((p[i] - center[i]).abs() - half[i]).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt();
        prop_assert!(res <= d - r + 1e-12);
        if res >= 0.0 {
            prop_assert!(d >= r - 1e-12);
        }
        let j = facet_index(&ob, &c).unwrap();
        prop_assert!(j < 6);
    }
}

#[test]
fn residual_at_polytope_center_is_an_error() {
    let ob = PolytopeObstacle::from_box([0.3, 0.0, 0.1], [0.1; 3]).unwrap();
    assert!(facet_index(&ob, &ob.center()).is_err());
}

#[test]
fn bundled_robots_load() {
    let g = generic();
    assert_eq!(g.chain.dof(), 7);
    assert_eq!(g.home_state.q.len(), 7);
    let p = RobotDescription::planar_2r().build().unwrap();
    let tool = p.chain.ee_pose(&p.home_state).translation;
    assert!((tool - Vector3::new(1.2, 0.6, 0.0)).norm() < 1e-9);
}

#[test]
fn description_rejects_unknown_fields() {
    let mut v: serde_json::Value = serde_json::to_value(RobotDescription::planar_2r()).unwrap();
    v["colour"] = "red".into();
    assert!(RobotDescription::from_json(&v.to_string()).is_err());
}
