//! Single-shooting optimal control problem: residuals, constraints and their
//! analytic Jacobians with respect to the flat control vector.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::reference::PoseTrajectory;
use crate::error::{Error, Result};
use crate::robot::{
    dynamics_jacobians, dynamics_step, ControlInput, Kinematics, PolytopeObstacle, RobotModel,
    RobotState,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostWeights {
    pub control: f64,
    pub position: f64,
    pub rotation: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            control: 1e-2,
            position: 1e2,
            rotation: 1.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("control", self.control),
            ("position", self.position),
            ("rotation", self.rotation),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::config(format!("weights.{name} must be finite and >= 0")));
            }
        }
        Ok(())
    }
}

/// Which tool-frame rotation axes are tracked. Leaving one axis out keeps only
/// the matching column of `I - R_e^T R_ref`, which is invariant to rotation
/// about that axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RotationMask {
    pub roll: bool,
    pub pitch: bool,
    pub yaw: bool,
}

impl Default for RotationMask {
    fn default() -> Self {
        Self {
            roll: true,
            pitch: true,
            yaw: true,
        }
    }
}

impl RotationMask {
    pub fn ignore_pitch() -> Self {
        Self {
            pitch: false,
            ..Self::default()
        }
    }

    pub fn columns(&self) -> [bool; 3] {
        let tracked = [self.roll, self.pitch, self.yaw];
        let free: Vec<usize> = (0..3).filter(|&i| !tracked[i]).collect();
        match free.as_slice() {
            [] => [true; 3],
            [axis] => {
                let mut c = [false; 3];
                c[*axis] = true;
                c
            }
            _ => [false; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcpSpec {
    pub model: RobotModel,
    pub obstacles: Vec<PolytopeObstacle>,
    pub reference: PoseTrajectory,
    pub x0: RobotState,
    pub weights: CostWeights,
    pub rotation_mask: RotationMask,
    pub enforce_joint_limits: bool,
}

impl OcpSpec {
    pub fn dt(&self) -> f64 {
        self.reference.dt
    }

    pub fn horizon(&self) -> usize {
        self.reference.horizon()
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if self.horizon() == 0 {
            return Err(Error::Degenerate("reference needs at least two samples".into()));
        }
        if self.x0.q.len() != self.model.chain.dof() {
            return Err(Error::config(format!(
                "x0 needs {} joint values",
                self.model.chain.dof()
            )));
        }
        if !self.x0.is_finite() {
            return Err(Error::config("x0 must be finite"));
        }
        Ok(())
    }
}

/// Per-stage cost before the `dt` factor. The terminal stage uses `u = 0`.
pub fn running_cost(spec: &OcpSpec, state: &RobotState, control: &ControlInput, k: usize) -> f64 {
    let fk = spec.model.chain.forward(state);
    let w = &spec.weights;
    let (ep, er) = tracking_errors(spec, &fk, k);
    w.control * control.squared_norm() + w.position * ep.norm_squared() + w.rotation * er
}

fn tracking_errors(spec: &OcpSpec, fk: &Kinematics, k: usize) -> (Vector3<f64>, f64) {
    let r = &spec.reference.samples[k];
    let ee = fk.ee();
    let e = Matrix3::identity() - ee.rotation.transpose() * r.rotation;
    let cols = spec.rotation_mask.columns();
    let er = (0..3)
        .filter(|&c| cols[c])
        .map(|c| e.column(c).norm_squared())
        .sum();
    (ee.translation - r.position, er)
}

pub fn rollout(x0: &RobotState, controls: &[ControlInput], dt: f64) -> Vec<RobotState> {
    let mut states = Vec::with_capacity(controls.len() + 1);
    states.push(x0.clone());
    for u in controls {
        let next = dynamics_step(states.last().unwrap(), u, dt);
        states.push(next);
    }
    states
}

/// Where a constraint row comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    SelfCollision { step: usize, pair: usize },
    Obstacle { step: usize, obstacle: usize, sphere: usize },
    JointLimit { step: usize, joint: usize, upper: bool },
    ControlBound { index: usize, upper: bool },
}

/// First-order data of the terms that depend on state `x_k`.
#[derive(Debug, Clone)]
pub struct StageDerivatives {
    pub residual_rows: Range<usize>,
    /// `d r[residual_rows] / d x_k`.
    pub residual_jacobian: DMatrix<f64>,
    pub constraint_rows: Range<usize>,
    /// `d g[constraint_rows] / d x_k`.
    pub constraint_jacobian: DMatrix<f64>,
    /// `d x_{k+1} / d x_k` and `d x_{k+1} / d u_k`; empty at the final state.
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

/// Residuals and constraints for one control vector. Control residuals are
/// the first `K * nu` rows, `sqrt(dt w_u) u`; control bounds are the last
/// constraints.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub states: Vec<RobotState>,
    /// Stacked least-squares residuals; the objective is `r . r`.
    pub residuals: DVector<f64>,
    /// Inequalities `g >= 0`.
    pub constraints: DVector<f64>,
    pub stages: Option<Vec<StageDerivatives>>,
}

impl Evaluation {
    pub fn cost(&self) -> f64 {
        self.residuals.norm_squared()
    }

    pub fn max_violation(&self) -> f64 {
        self.constraints.iter().fold(0.0f64, |m, &g| m.max(-g))
    }
}

pub struct OcpProblem<'a> {
    pub spec: &'a OcpSpec,
    pairs: Vec<[usize; 2]>,
    kinds: Vec<ConstraintKind>,
    nx: usize,
    nu: usize,
    steps: usize,
    rot_cols: Vec<usize>,
}

impl<'a> OcpProblem<'a> {
    pub fn new(spec: &'a OcpSpec) -> Result<Self> {
        spec.validate()?;
        let chain = &spec.model.chain;
        let pairs = spec.model.cover.collision_pairs();
        let steps = spec.horizon();
        let n_spheres = spec.model.cover.spheres.len();
        let mut kinds = Vec::new();
        for step in 1..=steps {
            kinds.extend((0..pairs.len()).map(|pair| ConstraintKind::SelfCollision { step, pair }));
            for obstacle in 0..spec.obstacles.len() {
                kinds.extend(
                    (0..n_spheres).map(|sphere| ConstraintKind::Obstacle { step, obstacle, sphere }),
                );
            }
            if spec.enforce_joint_limits {
                for (joint, j) in chain.joints.iter().enumerate() {
                    if j.limits.is_some() {
                        kinds.push(ConstraintKind::JointLimit { step, joint, upper: false });
                        kinds.push(ConstraintKind::JointLimit { step, joint, upper: true });
                    }
                }
            }
        }
        let nu = chain.control_dim();
        let b = &spec.model.bounds;
        for step in 0..steps {
            for i in 0..nu {
                let (lo, hi) = (b.lower[i], b.upper[i]);
                if lo == hi {
                    continue;
                }
                let index = step * nu + i;
                if lo.is_finite() {
                    kinds.push(ConstraintKind::ControlBound { index, upper: false });
                }
                if hi.is_finite() {
                    kinds.push(ConstraintKind::ControlBound { index, upper: true });
                }
            }
        }
        let cols = spec.rotation_mask.columns();
        Ok(Self {
            spec,
            pairs,
            kinds,
            nx: chain.state_dim(),
            nu,
            steps,
            rot_cols: (0..3).filter(|&c| cols[c]).collect(),
        })
    }

    pub fn variable_count(&self) -> usize {
        self.steps * self.nu
    }

    pub fn constraint_kinds(&self) -> &[ConstraintKind] {
        &self.kinds
    }

    /// Indices of controls that are not pinned by equal bounds.
    pub fn free_variables(&self) -> Vec<usize> {
        let b = &self.spec.model.bounds;
        (0..self.variable_count())
            .filter(|&i| b.lower[i % self.nu] != b.upper[i % self.nu])
            .collect()
    }

    /// Sets pinned coordinates to their bound.
    pub fn pin(&self, u: &mut [f64]) {
        let b = &self.spec.model.bounds;
        for (i, x) in u.iter_mut().enumerate() {
            let j = i % self.nu;
            if b.lower[j] == b.upper[j] {
                *x = b.lower[j];
            }
        }
    }

    pub fn split_controls(&self, u: &[f64]) -> Vec<ControlInput> {
        u.chunks(self.nu).map(ControlInput::from_slice).collect()
    }

    pub fn flatten_controls(controls: &[ControlInput]) -> Vec<f64> {
        controls.iter().flat_map(|c| c.to_vec()).collect()
    }

    pub fn state_dim(&self) -> usize {
        self.nx
    }

    pub fn control_dim(&self) -> usize {
        self.nu
    }

    pub fn horizon(&self) -> usize {
        self.steps
    }

    /// Scale of the control residual rows, `sqrt(dt * w_u)`.
    pub fn control_scale(&self) -> f64 {
        (self.spec.dt() * self.spec.weights.control).sqrt()
    }

    pub fn objective(&self, u: &[f64]) -> f64 {
        self.evaluate(u, false).cost()
    }

    /// Gradient of the objective by one adjoint sweep.
    pub fn objective_gradient(&self, u: &[f64]) -> DVector<f64> {
        let ev = self.evaluate(u, true);
        self.gradient(&ev, &DVector::zeros(ev.constraints.len()))
    }

    /// Gradient of `r . r - mu . g` for an evaluation with derivatives.
    pub fn gradient(&self, ev: &Evaluation, mu: &DVector<f64>) -> DVector<f64> {
        let stages = ev.stages.as_ref().expect("evaluation without derivatives");
        let (nu, n) = (self.nu, self.variable_count());
        let su = self.control_scale();
        let mut grad = DVector::zeros(n);
        for i in 0..n {
            grad[i] = 2.0 * su * ev.residuals[i];
        }
        for (ci, kind) in self.kinds.iter().enumerate() {
            if let ConstraintKind::ControlBound { index, upper } = *kind {
                grad[index] -= mu[ci] * if upper { -1.0 } else { 1.0 };
            }
        }
        let mut adj = self.state_gradient(&stages[self.steps], ev, mu);
        for k in (0..self.steps).rev() {
            let st = &stages[k];
            let gu = st.b.tr_mul(&adj);
            for i in 0..nu {
                grad[k * nu + i] += gu[i];
            }
            adj = self.state_gradient(st, ev, mu) + st.a.tr_mul(&adj);
        }
        grad
    }

    /// `d/dx_k` of the stage-`k` part of `r . r - mu . g`.
    pub fn state_gradient(&self, st: &StageDerivatives, ev: &Evaluation, mu: &DVector<f64>) -> DVector<f64> {
        let r = ev.residuals.rows(st.residual_rows.start, st.residual_rows.len());
        let m = mu.rows(st.constraint_rows.start, st.constraint_rows.len());
        st.residual_jacobian.tr_mul(&r) * 2.0 - st.constraint_jacobian.tr_mul(&m)
    }

    /// Dense Jacobians of residuals and constraints with respect to `u`,
    /// assembled from the stage data by forward sensitivities.
    pub fn dense_jacobians(&self, ev: &Evaluation) -> (DMatrix<f64>, DMatrix<f64>) {
        let stages = ev.stages.as_ref().expect("evaluation without derivatives");
        let (nx, nu, n) = (self.nx, self.nu, self.variable_count());
        let su = self.control_scale();
        let mut jr = DMatrix::zeros(ev.residuals.len(), n);
        let mut gj = DMatrix::zeros(ev.constraints.len(), n);
        for i in 0..n {
            jr[(i, i)] = su;
        }
        for (ci, kind) in self.kinds.iter().enumerate() {
            if let ConstraintKind::ControlBound { index, upper } = *kind {
                gj[(ci, index)] = if upper { -1.0 } else { 1.0 };
            }
        }
        let mut sens = DMatrix::<f64>::zeros(nx, n);
        for (k, st) in stages.iter().enumerate() {
            let cols = k * nu;
            if cols > 0 {
                let s = sens.columns(0, cols);
                let rr = &st.residual_rows;
                jr.view_mut((rr.start, 0), (rr.len(), cols))
                    .copy_from(&(&st.residual_jacobian * &s));
                let cr = &st.constraint_rows;
                gj.view_mut((cr.start, 0), (cr.len(), cols))
                    .copy_from(&(&st.constraint_jacobian * &s));
            }
            if k < self.steps {
                let next = &st.a * sens.columns(0, cols);
                sens.columns_mut(0, cols).copy_from(&next);
                sens.columns_mut(cols, nu).copy_from(&st.b);
            }
        }
        (jr, gj)
    }

    pub fn evaluate(&self, u: &[f64], with_derivatives: bool) -> Evaluation {
        let spec = self.spec;
        let chain = &spec.model.chain;
        let cover = &spec.model.cover;
        let dt = spec.dt();
        let w = &spec.weights;
        let (nx, nu) = (self.nx, self.nu);
        let controls = self.split_controls(u);
        let states = rollout(&spec.x0, &controls, dt);

        let stage_rows = 3 + 3 * self.rot_cols.len();
        let rows = self.steps * nu + (self.steps + 1) * stage_rows;
        let mut r = DVector::zeros(rows);
        let mut g = DVector::zeros(self.kinds.len());
        let mut stages = Vec::with_capacity(if with_derivatives { states.len() } else { 0 });

        let su = self.control_scale();
        let sp = (dt * w.position).sqrt();
        let sr = (dt * w.rotation).sqrt();
        for (i, x) in u.iter().enumerate() {
            r[i] = su * x;
        }

        let mut ci = 0;
        let mut row = self.steps * nu;
        for (k, x) in states.iter().enumerate() {
            let fk = chain.forward(x);
            let ee = *fk.ee();
            let sample = &spec.reference.samples[k];
            let row0 = row;
            let mut jres = if with_derivatives {
                DMatrix::zeros(stage_rows, nx)
            } else {
                DMatrix::zeros(0, 0)
            };

            let ep = ee.translation - sample.position;
            r.rows_mut(row, 3).copy_from(&(ep * sp));
            if with_derivatives {
                let jp = fk.point_jacobian(chain.ee_link(), &ee.translation);
                jres.view_mut((0, 0), (3, nx)).copy_from(&(jp * sp));
            }
            row += 3;

            let drs = if with_derivatives {
                fk.rotation_derivatives(chain.ee_link())
            } else {
                Vec::new()
            };
            for &c in &self.rot_cols {
                let ref_col = sample.rotation.column(c).into_owned();
                let res = Vector3::ith(c, 1.0) - ee.rotation.transpose() * ref_col;
                r.rows_mut(row, 3).copy_from(&(res * sr));
                for (i, dr) in drs.iter().enumerate() {
                    let d = -(dr.transpose() * ref_col) * sr;
                    jres.fixed_view_mut::<3, 1>(row - row0, i).copy_from(&d);
                }
                row += 3;
            }

            let c0 = ci;
            let mut jcon: Vec<DVector<f64>> = Vec::new();
            if k > 0 {
                let spheres = cover.spheres_from(&fk);
                let sphere_jac = |i: usize| fk.point_jacobian(cover.spheres[i].link, &spheres[i].center);
                for &[a, b] in &self.pairs {
                    let d = spheres[a].center - spheres[b].center;
                    let dist = d.norm();
                    g[ci] = dist - spheres[a].radius - spheres[b].radius;
                    if with_derivatives {
                        jcon.push(if dist > 0.0 {
                            (sphere_jac(a) - sphere_jac(b)).tr_mul(&(d / dist))
                        } else {
                            DVector::zeros(nx)
                        });
                    }
                    ci += 1;
                }
                for obs in &spec.obstacles {
                    for (i, sp_i) in spheres.iter().enumerate() {
                        let facet = obs.facet_index(&sp_i.center).unwrap_or(0);
                        g[ci] = obs.residual_on_facet(facet, sp_i);
                        if with_derivatives {
                            jcon.push(sphere_jac(i).tr_mul(&obs.row(facet)));
                        }
                        ci += 1;
                    }
                }
                if spec.enforce_joint_limits {
                    for (jn, joint) in chain.joints.iter().enumerate() {
                        if let Some([lo, hi]) = joint.limits {
                            g[ci] = x.q[jn] - lo;
                            g[ci + 1] = hi - x.q[jn];
                            if with_derivatives {
                                jcon.push(DVector::from_fn(nx, |i, _| if i == 3 + jn { 1.0 } else { 0.0 }));
                                jcon.push(DVector::from_fn(nx, |i, _| if i == 3 + jn { -1.0 } else { 0.0 }));
                            }
                            ci += 2;
                        }
                    }
                }
            }

            if with_derivatives {
                let (a, b) = if k < self.steps {
                    dynamics_jacobians(x, &controls[k], dt)
                } else {
                    (DMatrix::zeros(0, 0), DMatrix::zeros(0, 0))
                };
                let mut cj = DMatrix::zeros(jcon.len(), nx);
                for (i, v) in jcon.iter().enumerate() {
                    cj.row_mut(i).copy_from(&v.transpose());
                }
                stages.push(StageDerivatives {
                    residual_rows: row0..row,
                    residual_jacobian: jres,
                    constraint_rows: c0..ci,
                    constraint_jacobian: cj,
                    a,
                    b,
                });
            }
        }

        let bounds = &spec.model.bounds;
        for kind in &self.kinds[ci..] {
            if let ConstraintKind::ControlBound { index, upper } = *kind {
                let j = index % nu;
                g[ci] = if upper {
                    bounds.upper[j] - u[index]
                } else {
                    u[index] - bounds.lower[j]
                };
                ci += 1;
            }
        }
        debug_assert_eq!(ci, self.kinds.len());

        Evaluation {
            states,
            residuals: r,
            constraints: g,
            stages: with_derivatives.then_some(stages),
        }
    }
}

/// Collision residuals of a single state, for reporting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateResiduals {
    pub self_collision: Vec<f64>,
    /// Indexed `[obstacle][sphere]`.
    pub obstacles: Vec<Vec<f64>>,
}

pub fn state_residuals(spec: &OcpSpec, state: &RobotState) -> StateResiduals {
    let fk = spec.model.chain.forward(state);
    let spheres = spec.model.cover.spheres_from(&fk);
    let pairs = spec.model.cover.collision_pairs();
    StateResiduals {
        self_collision: crate::robot::self_collision_residuals(&spheres, &pairs),
        obstacles: spec
            .obstacles
            .iter()
            .map(|o| {
                spheres
                    .iter()
                    .map(|s| {
                        let f = o.facet_index(&s.center).unwrap_or(0);
                        o.residual_on_facet(f, s)
                    })
                    .collect()
            })
            .collect(),
    }
}
