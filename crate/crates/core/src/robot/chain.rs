use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::transform::{exp_screw, rot_z, skew, Transform};
use crate::error::{Error, Result};

/// Base pose `(rx, ry, psi)` followed by the arm joint angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub rx: f64,
    pub ry: f64,
    pub psi: f64,
    pub q: Vec<f64>,
}

impl RobotState {
    pub fn zeros(dof: usize) -> Self {
        Self {
            rx: 0.0,
            ry: 0.0,
            psi: 0.0,
            q: vec![0.0; dof],
        }
    }

    pub fn dim(&self) -> usize {
        3 + self.q.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend([self.rx, self.ry, self.psi]);
        v.extend_from_slice(&self.q);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            rx: v[0],
            ry: v[1],
            psi: v[2],
            q: v[3..].to_vec(),
        }
    }

    /// Yaw wrapped into `(-pi, pi]`, for display only.
    pub fn wrapped_psi(&self) -> f64 {
        use std::f64::consts::{PI, TAU};
        let w = (self.psi + PI).rem_euclid(TAU) - PI;
        if w <= -PI {
            w + TAU
        } else {
            w
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vec().iter().all(|v| v.is_finite())
    }
}

/// Forward and yaw velocity of the base followed by joint velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub ur: f64,
    pub upsi: f64,
    pub qdot: Vec<f64>,
}

impl ControlInput {
    pub fn zeros(dof: usize) -> Self {
        Self {
            ur: 0.0,
            upsi: 0.0,
            qdot: vec![0.0; dof],
        }
    }

    pub fn dim(&self) -> usize {
        2 + self.qdot.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend([self.ur, self.upsi]);
        v.extend_from_slice(&self.qdot);
        v
    }

    pub fn from_slice(v: &[f64]) -> Self {
        Self {
            ur: v[0],
            upsi: v[1],
            qdot: v[2..].to_vec(),
        }
    }

    pub fn squared_norm(&self) -> f64 {
        self.ur * self.ur + self.upsi * self.upsi + self.qdot.iter().map(|v| v * v).sum::<f64>()
    }
}

/// Explicit Euler step of the nonholonomic base and integrator joints.
pub fn dynamics_step(state: &RobotState, control: &ControlInput, dt: f64) -> RobotState {
    let (s, c) = state.psi.sin_cos();
    RobotState {
        rx: state.rx + c * control.ur * dt,
        ry: state.ry + s * control.ur * dt,
        psi: state.psi + control.upsi * dt,
        q: state
            .q
            .iter()
            .zip(&control.qdot)
            .map(|(q, qd)| q + qd * dt)
            .collect(),
    }
}

/// Jacobians `(d x+ / d x, d x+ / d u)` of [`dynamics_step`].
pub fn dynamics_jacobians(state: &RobotState, control: &ControlInput, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = state.q.len();
    let nx = 3 + n;
    let nu = 2 + n;
    let (s, c) = state.psi.sin_cos();
    let mut a = DMatrix::identity(nx, nx);
    a[(0, 2)] = -s * control.ur * dt;
    a[(1, 2)] = c * control.ur * dt;
    let mut b = DMatrix::zeros(nx, nu);
    b[(0, 0)] = c * dt;
    b[(1, 0)] = s * dt;
    b[(2, 1)] = dt;
    for j in 0..n {
        b[(3 + j, 2 + j)] = dt;
    }
    (a, b)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    /// Unit screw axis `(omega, v)` in the arm-root frame at the home pose.
    pub omega: Vector3<f64>,
    pub v: Vector3<f64>,
    /// Pose of the link frame attached after this joint, at home.
    pub link_home: Transform,
    pub limits: Option<[f64; 2]>,
}

/// Serial arm on a planar mobile base, evaluated with the product of
/// exponentials. Link indices: `0` base, `1..=n` arm links, `n + 1` end
/// effector.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    pub base_height: f64,
    pub mount: Transform,
    pub joints: Vec<Joint>,
    pub ee_home: Transform,
}

impl KinematicChain {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn state_dim(&self) -> usize {
        3 + self.dof()
    }

    pub fn control_dim(&self) -> usize {
        2 + self.dof()
    }

    pub fn link_count(&self) -> usize {
        self.dof() + 2
    }

    pub fn ee_link(&self) -> usize {
        self.dof() + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.joints.is_empty() {
            return Err(Error::config("chain needs at least one joint"));
        }
        for (i, j) in self.joints.iter().enumerate() {
            let wn = j.omega.norm();
            let ok = if wn == 0.0 {
                (j.v.norm() - 1.0).abs() < 1e-9
            } else {
                (wn - 1.0).abs() < 1e-9
            };
            if !ok {
                return Err(Error::config(format!("joints[{i}].screw is not a unit screw")));
            }
            if j.link_home.orthonormality_error() > super::transform::ORTHONORMAL_TOL {
                return Err(Error::config(format!("joints[{i}].link_home rotation not orthonormal")));
            }
        }
        if self.mount.orthonormality_error() > super::transform::ORTHONORMAL_TOL
            || self.ee_home.orthonormality_error() > super::transform::ORTHONORMAL_TOL
        {
            return Err(Error::config("mount/ee_home rotation not orthonormal"));
        }
        Ok(())
    }

    pub fn base_transform(&self, state: &RobotState) -> Transform {
        Transform::new(
            rot_z(state.psi),
            Vector3::new(state.rx, state.ry, self.base_height),
        )
    }

    /// Link poses and world-frame joint twists at `state`.
    pub fn forward(&self, state: &RobotState) -> Kinematics {
        debug_assert_eq!(state.q.len(), self.dof());
        let base = self.base_transform(state);
        let mut acc = base * self.mount;
        let mut links = Vec::with_capacity(self.link_count());
        let mut twists = Vec::with_capacity(self.dof());
        links.push(base);
        for (joint, &q) in self.joints.iter().zip(&state.q) {
            twists.push(acc.transform_twist(&joint.omega, &joint.v));
            acc = acc * exp_screw(&joint.omega, &joint.v, q);
            links.push(acc * joint.link_home);
        }
        links.push(acc * self.ee_home);
        Kinematics {
            links,
            twists,
            base_origin: base.translation,
        }
    }

    pub fn ee_pose(&self, state: &RobotState) -> Transform {
        *self.forward(state).ee()
    }
}

/// Result of a forward pass, with what is needed for analytic Jacobians.
#[derive(Debug, Clone)]
pub struct Kinematics {
    pub links: Vec<Transform>,
    /// World-frame `(omega, v)` of every joint at the current configuration.
    pub twists: Vec<(Vector3<f64>, Vector3<f64>)>,
    base_origin: Vector3<f64>,
}

impl Kinematics {
    pub fn ee(&self) -> &Transform {
        self.links.last().expect("end-effector link")
    }

    fn joints_moving(&self, link: usize) -> usize {
        link.min(self.twists.len())
    }

    /// `3 x (3 + n)` Jacobian of a world point rigidly attached to `link`.
    pub fn point_jacobian(&self, link: usize, p: &Vector3<f64>) -> DMatrix<f64> {
        let n = self.twists.len();
        let mut jac = DMatrix::zeros(3, 3 + n);
        jac[(0, 0)] = 1.0;
        jac[(1, 1)] = 1.0;
        let rel = p - self.base_origin;
        jac[(0, 2)] = -rel.y;
        jac[(1, 2)] = rel.x;
        for (j, (w, v)) in self.twists.iter().take(self.joints_moving(link)).enumerate() {
            let col = w.cross(p) + v;
            jac.fixed_view_mut::<3, 1>(0, 3 + j).copy_from(&col);
        }
        jac
    }

    /// `d R_link / d x_k` for every state coordinate `k`.
    pub fn rotation_derivatives(&self, link: usize) -> Vec<Matrix3<f64>> {
        let n = self.twists.len();
        let r = self.links[link].rotation;
        let mut out = vec![Matrix3::zeros(); 3 + n];
        out[2] = skew(&Vector3::z()) * r;
        for (j, (w, _)) in self.twists.iter().take(self.joints_moving(link)).enumerate() {
            out[3 + j] = skew(w) * r;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::description::RobotDescription;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn planar() -> KinematicChain {
        RobotDescription::planar_2r().build().unwrap().chain
    }

    fn generic() -> KinematicChain {
        RobotDescription::generic_7dof().build().unwrap().chain
    }

    #[test]
    fn zero_state_gives_home_pose() {
        let chain = generic();
        let fk = chain.forward(&RobotState::zeros(7));
        let expected = chain.base_transform(&RobotState::zeros(7)) * chain.mount * chain.ee_home;
        assert_relative_eq!(fk.ee().rotation, expected.rotation, epsilon = 1e-12);
        assert_relative_eq!(fk.ee().translation, expected.translation, epsilon = 1e-12);
    }

    #[test]
    fn planar_2r_analytic() {
        let chain = planar();
        let mut s = RobotState::zeros(2);
        s.q = vec![FRAC_PI_2, 0.0];
        let p = chain.ee_pose(&s).translation;
        assert_relative_eq!(p, Vector3::new(0.0, 2.0, 0.0), epsilon = 1e-12);

        for (q1, q2) in [(0.3, -0.7), (1.2, 2.0), (-2.5, 0.4)] {
            s.q = vec![q1, q2];
            let p = chain.ee_pose(&s).translation;
            let expected = Vector3::new(
                q1.cos() + (q1 + q2).cos(),
                q1.sin() + (q1 + q2).sin(),
                0.0,
            );
            assert_relative_eq!(p, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn base_translation_shifts_end_effector() {
        let chain = generic();
        let mut s = RobotState::zeros(7);
        s.q = vec![0.1, -0.4, 0.3, 1.0, -0.2, 0.5, 0.7];
        let before = chain.ee_pose(&s);
        s.rx += 0.37;
        let after = chain.ee_pose(&s);
        assert_relative_eq!(after.translation - before.translation, Vector3::new(0.37, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(after.rotation, before.rotation, epsilon = 1e-12);
    }

    #[test]
    fn euler_updates() {
        let s = RobotState::zeros(2);
        let zero = ControlInput::zeros(2);
        assert_eq!(dynamics_step(&s, &zero, 0.1), s);

        let u = ControlInput { ur: 1.0, upsi: 0.0, qdot: vec![0.0; 2] };
        let n = dynamics_step(&s, &u, 0.1);
        assert_relative_eq!(n.rx, 0.1);
        assert_eq!(n.ry, 0.0);

        let s2 = RobotState { psi: PI / 2.0, ..s };
        let n2 = dynamics_step(&s2, &u, 0.1);
        assert_relative_eq!(n2.ry, 0.1, epsilon = 1e-12);
        assert!(n2.rx.abs() < 1e-12);
    }

    #[test]
    fn no_sideways_slip() {
        let s = RobotState { rx: 0.0, ry: 0.0, psi: 0.8, q: vec![0.0; 2] };
        let u = ControlInput { ur: 0.5, upsi: 0.5, qdot: vec![0.0; 2] };
        let n = dynamics_step(&s, &u, 0.2);
        assert_eq!(n.ry - s.ry, 0.8f64.sin() * 0.5 * 0.2);
        // displacement is along the heading
        let heading = Vector3::new(0.8f64.cos(), 0.8f64.sin(), 0.0);
        let d = Vector3::new(n.rx - s.rx, n.ry - s.ry, 0.0);
        assert!(heading.cross(&d).norm() < 1e-15);
    }

    #[test]
    fn wrapped_yaw() {
        let s = RobotState { psi: 3.0 * PI, ..RobotState::zeros(0) };
        assert_relative_eq!(s.wrapped_psi(), PI, epsilon = 1e-12);
        let s = RobotState { psi: -PI, ..RobotState::zeros(0) };
        assert_relative_eq!(s.wrapped_psi(), PI, epsilon = 1e-12);
    }
}
