//! Gauss-Newton SQP inside an augmented-Lagrangian loop, with Armijo
//! backtracking on the merit function.

use serde::{Deserialize, Serialize};

use nalgebra::{DMatrix, DVector};

use super::problem::{ConstraintKind, Evaluation, OcpProblem, OcpSpec, StageDerivatives};
use crate::error::{Error, Result};
use crate::robot::{ControlInput, RobotState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    LineSearchFail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_outer_iterations: usize,
    pub max_inner_iterations: usize,
    pub kkt_tolerance: f64,
    pub initial_penalty: f64,
    pub penalty_growth: f64,
    pub max_penalty: f64,
    pub armijo_slope: f64,
    pub step_contraction: f64,
    pub min_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_outer_iterations: 100,
            max_inner_iterations: 50,
            kkt_tolerance: 1e-6,
            initial_penalty: 10.0,
            penalty_growth: 10.0,
            max_penalty: 1e6,
            armijo_slope: 1e-4,
            step_contraction: 0.5,
            min_step: 1e-12,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_outer_iterations == 0 || self.max_inner_iterations == 0 {
            return Err(Error::config("solver iteration limits must be positive"));
        }
        if !(self.kkt_tolerance > 0.0) {
            return Err(Error::config("solver.kkt_tolerance must be positive"));
        }
        if !(self.initial_penalty > 0.0 && self.penalty_growth >= 1.0 && self.max_penalty >= self.initial_penalty) {
            return Err(Error::config("solver penalty settings are inconsistent"));
        }
        if !(self.step_contraction > 0.0 && self.step_contraction < 1.0) {
            return Err(Error::config("solver.step_contraction must be in (0, 1)"));
        }
        if !(self.armijo_slope > 0.0 && self.armijo_slope < 0.5) {
            return Err(Error::config("solver.armijo_slope must be in (0, 0.5)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeritRecord {
    pub outer: usize,
    pub inner: usize,
    pub merit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub controls: Vec<ControlInput>,
    pub states: Vec<RobotState>,
    pub cost: f64,
    pub initial_cost: f64,
    pub max_constraint_violation: f64,
    pub kkt_residual: f64,
    pub iterations: usize,
    pub outer_iterations: usize,
    pub multipliers: Vec<f64>,
    pub merit_history: Vec<MeritRecord>,
}

struct Merit {
    value: f64,
    gradient: DVector<f64>,
}

fn merit_value(ev: &Evaluation, lambda: &DVector<f64>, rho: f64) -> f64 {
    let mut value = ev.cost();
    for (g, l) in ev.constraints.iter().zip(lambda.iter()) {
        let s = l - rho * g;
        value += (s.max(0.0).powi(2) - l * l) / (2.0 * rho);
    }
    value
}

fn shifted_multipliers(ev: &Evaluation, lambda: &DVector<f64>, rho: f64) -> DVector<f64> {
    (lambda - &ev.constraints * rho).map(|s| s.max(0.0))
}

fn merit(problem: &OcpProblem<'_>, ev: &Evaluation, lambda: &DVector<f64>, rho: f64, free: &[usize]) -> Merit {
    let mu = shifted_multipliers(ev, lambda, rho);
    let full = problem.gradient(ev, &mu);
    Merit {
        value: merit_value(ev, lambda, rho),
        gradient: DVector::from_iterator(free.len(), free.iter().map(|&i| full[i])),
    }
}

/// Gauss-Newton step of the merit function over the free controls, solved
/// stage by stage with a Riccati recursion. Equivalent to factorising the
/// dense condensed system, at linear cost in the horizon.
fn gauss_newton_step(
    problem: &OcpProblem<'_>,
    ev: &Evaluation,
    lambda: &DVector<f64>,
    rho: f64,
    stage_free: &[usize],
) -> Result<DVector<f64>> {
    let stages = ev.stages.as_ref().expect("evaluation with derivatives");
    let steps = problem.horizon();
    let (nu, nf) = (problem.control_dim(), stage_free.len());
    let su = problem.control_scale();
    let mu = shifted_multipliers(ev, lambda, rho);

    let mut bound_curv = vec![0.0; problem.variable_count()];
    let mut grad_u = DVector::zeros(problem.variable_count());
    for i in 0..grad_u.len() {
        grad_u[i] = 2.0 * su * ev.residuals[i];
    }
    for (ci, kind) in problem.constraint_kinds().iter().enumerate() {
        if let ConstraintKind::ControlBound { index, upper } = *kind {
            if mu[ci] > 0.0 {
                bound_curv[index] += rho;
            }
            grad_u[index] -= mu[ci] * if upper { -1.0 } else { 1.0 };
        }
    }

    let stage_q = |st: &StageDerivatives| {
        let mut q = st.residual_jacobian.tr_mul(&st.residual_jacobian) * 2.0;
        for (row, ci) in st.constraint_rows.clone().enumerate() {
            if mu[ci] > 0.0 {
                let c = st.constraint_jacobian.row(row);
                q += c.tr_mul(&c) * rho;
            }
        }
        (q, problem.state_gradient(st, ev, &mu))
    };
    let terminal = stage_q(&stages[steps]);
    let mut inner: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(steps);
    for st in &stages[..steps] {
        inner.push(stage_q(st));
    }

    let mut reg = 1e-9;
    for _ in 0..12 {
        let mut gains: Vec<(DMatrix<f64>, DVector<f64>)> = Vec::with_capacity(steps);
        let (mut p_mat, mut p_vec) = terminal.clone();
        let mut ok = true;
        for k in (0..steps).rev() {
            let st = &stages[k];
            let bf = st.b.select_columns(stage_free);
            let pb = &p_mat * &bf;
            let mut huu = bf.tr_mul(&pb);
            let mut hu = bf.tr_mul(&p_vec);
            for (a, &j) in stage_free.iter().enumerate() {
                let idx = k * nu + j;
                huu[(a, a)] += 2.0 * su * su + bound_curv[idx] + reg;
                hu[a] += grad_u[idx];
            }
            let hux = pb.tr_mul(&st.a);
            let Some(ch) = huu.cholesky() else {
                ok = false;
                break;
            };
            let gain = -ch.solve(&hux);
            let ff = -ch.solve(&hu);
            let (q, qv) = &inner[k];
            let pa = &p_mat * &st.a;
            let mut next = q + st.a.tr_mul(&pa) + hux.tr_mul(&gain);
            next = (&next + next.transpose()) * 0.5;
            p_vec = qv + st.a.tr_mul(&p_vec) + hux.tr_mul(&ff);
            p_mat = next;
            gains.push((gain, ff));
        }
        if ok {
            gains.reverse();
            let mut d = DVector::zeros(steps * nf);
            let mut dx = DVector::zeros(problem.state_dim());
            for (k, (gain, ff)) in gains.iter().enumerate() {
                let du = gain * &dx + ff;
                d.rows_mut(k * nf, nf).copy_from(&du);
                dx = &stages[k].a * &dx + stages[k].b.select_columns(stage_free) * du;
            }
            if d.iter().all(|x| x.is_finite()) {
                return Ok(d);
            }
        }
        reg *= 100.0;
    }
    Err(Error::Numeric("Gauss-Newton system could not be factorised".into()))
}

fn check_finite(ev: &Evaluation) -> Result<()> {
    if ev.residuals.iter().chain(ev.constraints.iter()).all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric("non-finite value in rollout or residuals".into()))
    }
}

/// Solves the OCP from `initial` controls, or zeros when `None`.
pub fn solve_ocp(spec: &OcpSpec, initial: Option<&[ControlInput]>, options: &SolverOptions) -> Result<SolveResult> {
    options.validate()?;
    let problem = OcpProblem::new(spec)?;
    let n = problem.variable_count();
    let mut u = match initial {
        Some(c) => {
            if c.len() != spec.horizon() || c.iter().any(|c| c.qdot.len() != spec.model.chain.dof()) {
                return Err(Error::config(format!(
                    "initial guess needs {} controls of dimension {}",
                    spec.horizon(),
                    spec.model.chain.control_dim()
                )));
            }
            OcpProblem::flatten_controls(c)
        }
        None => vec![0.0; n],
    };
    problem.pin(&mut u);
    let free = problem.free_variables();
    let stage_free: Vec<usize> = {
        let b = &spec.model.bounds;
        (0..problem.control_dim()).filter(|&j| b.lower[j] != b.upper[j]).collect()
    };

    let mut ev = problem.evaluate(&u, true);
    check_finite(&ev)?;
    let initial_cost = ev.cost();
    let mut lambda = DVector::zeros(ev.constraints.len());
    let mut rho = options.initial_penalty;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut status = SolveStatus::MaxIter;
    let mut kkt = f64::INFINITY;
    let mut prev_violation = ev.max_violation();
    let mut outer_done = 0;
    let inner_tol = 0.1 * options.kkt_tolerance;

    'outer: for outer in 0..options.max_outer_iterations {
        outer_done = outer + 1;
        let mut m = merit(&problem, &ev, &lambda, rho, &free);
        history.push(MeritRecord { outer, inner: 0, merit: m.value });
        for inner in 1..=options.max_inner_iterations {
            if m.gradient.amax() <= inner_tol {
                break;
            }
            let d = gauss_newton_step(&problem, &ev, &lambda, rho, &stage_free)?;
            let slope = m.gradient.dot(&d);
            let mut alpha = 1.0;
            let accepted = loop {
                let mut trial = u.clone();
                for (k, &i) in free.iter().enumerate() {
                    trial[i] += alpha * d[k];
                }
                let trial_ev = problem.evaluate(&trial, false);
                if trial_ev.residuals.iter().chain(trial_ev.constraints.iter()).all(|x| x.is_finite()) {
                    if merit_value(&trial_ev, &lambda, rho) <= m.value + options.armijo_slope * alpha * slope {
                        break Some(trial);
                    }
                }
                alpha *= options.step_contraction;
                if alpha < options.min_step {
                    break None;
                }
            };
            let Some(trial) = accepted else {
                if m.gradient.amax() <= options.kkt_tolerance {
                    break;
                }
                status = SolveStatus::LineSearchFail;
                break 'outer;
            };
            u = trial;
            ev = problem.evaluate(&u, true);
            check_finite(&ev)?;
            iterations += 1;
            m = merit(&problem, &ev, &lambda, rho, &free);
            history.push(MeritRecord { outer, inner, merit: m.value });
        }

        let new_lambda = (&lambda - &ev.constraints * rho).map(|x| x.max(0.0));
        let complementarity = new_lambda
            .iter()
            .zip(ev.constraints.iter())
            .fold(0.0f64, |acc, (l, g)| acc.max(l.min(*g).abs()));
        kkt = m.gradient.amax().max(complementarity);
        lambda = new_lambda;
        if kkt < options.kkt_tolerance {
            status = SolveStatus::Converged;
            break;
        }
        let violation = ev.max_violation();
        if violation > 0.25 * prev_violation {
            rho = (rho * options.penalty_growth).min(options.max_penalty);
        }
        prev_violation = violation;
    }

    let controls = problem.split_controls(&u);
    let states = super::problem::rollout(&spec.x0, &controls, spec.dt());
    debug_assert_eq!(states, ev.states);
    Ok(SolveResult {
        status,
        cost: ev.cost(),
        initial_cost,
        max_constraint_violation: ev.max_violation(),
        kkt_residual: kkt,
        iterations,
        outer_iterations: outer_done,
        multipliers: lambda.iter().copied().collect(),
        merit_history: history,
        controls,
        states,
    })
}

/// Dense Jacobian of the objective by central differences, for checks.
pub fn finite_difference_gradient(problem: &OcpProblem<'_>, u: &[f64], h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(u.len());
    let mut x = u.to_vec();
    for i in 0..u.len() {
        let orig = x[i];
        x[i] = orig + h;
        let fp = problem.objective(&x);
        x[i] = orig - h;
        let fm = problem.objective(&x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::RobotDescription;
    use crate::trajopt::problem::{CostWeights, RotationMask};
    use crate::trajopt::reference::PoseTrajectory;

    #[test]
    fn constant_reference_at_start_is_optimal() {
        let model = RobotDescription::generic_7dof().build().unwrap();
        let x0 = model.home_state.clone();
        let pose = model.chain.ee_pose(&x0);
        let spec = OcpSpec {
            reference: PoseTrajectory::constant(&pose, 10, 0.1).unwrap(),
            model,
            obstacles: vec![],
            x0,
            weights: CostWeights::default(),
            rotation_mask: RotationMask::default(),
            enforce_joint_limits: false,
        };
        let res = solve_ocp(&spec, None, &SolverOptions::default()).unwrap();
        assert_eq!(res.status, SolveStatus::Converged);
        assert!(res.cost <= 1e-8, "{}", res.cost);
        assert!(res.controls.iter().all(|c| c.squared_norm() < 1e-12));
    }

    #[test]
    fn rejects_bad_initial_guess() {
        let model = RobotDescription::planar_2r().build().unwrap();
        let x0 = model.home_state.clone();
        let pose = model.chain.ee_pose(&x0);
        let spec = OcpSpec {
            reference: PoseTrajectory::constant(&pose, 5, 0.1).unwrap(),
            model,
            obstacles: vec![],
            x0,
            weights: CostWeights::default(),
            rotation_mask: RotationMask::default(),
            enforce_joint_limits: false,
        };
        let guess = vec![ControlInput::zeros(2); 3];
        assert!(solve_ocp(&spec, Some(&guess), &SolverOptions::default()).is_err());
    }
}
