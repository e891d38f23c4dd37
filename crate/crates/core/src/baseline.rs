//! Reference wiping policies and Monte-Carlo evaluation.

use std::f64::consts::{FRAC_PI_4, PI, TAU};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, Observation, WipingEnv};
use crate::error::{Error, Result};
use crate::sde::{TableGeometry, WipeAction};

/// Anything that maps observations to wipes.
pub trait Policy {
    fn act(&mut self, obs: &Observation, step: usize, table: &TableGeometry) -> Result<WipeAction>;

    /// Called before every episode.
    fn begin_episode(&mut self, _seed: u64) -> Result<()> {
        Ok(())
    }
}

/// Wipes from near the edge to the table centre, rotating the approach
/// direction by pi/4 each step.
pub fn rotating_center_action(step_index: usize, table: &TableGeometry) -> WipeAction {
    let phi = (step_index % 8) as f64 * FRAC_PI_4;
    let r = 0.45 * table.max_wipe_length();
    let [cx, cy] = table.center();
    let raw = WipeAction::new(cx + r * phi.cos(), cy + r * phi.sin(), phi + PI, r);
    raw.clamp_to(table).0
}

/// Wipes through the centroid of the dirty pixels along their principal axis,
/// heading towards the table centre.
pub fn covariance_axis_action(obs: &Observation, table: &TableGeometry) -> Result<WipeAction> {
    let mut w_sum = 0.0;
    let (mut mx, mut my) = (0.0, 0.0);
    for (i, j, v) in obs.set_pixels() {
        let [x, y] = Observation::pixel_center(i, j, table);
        w_sum += v;
        mx += v * x;
        my += v * y;
    }
    if w_sum <= 0.0 {
        return Err(Error::Policy("empty observation: nothing to wipe".into()));
    }
    mx /= w_sum;
    my /= w_sum;
    let (mut cxx, mut cxy, mut cyy) = (0.0, 0.0, 0.0);
    for (i, j, v) in obs.set_pixels() {
        let [x, y] = Observation::pixel_center(i, j, table);
        let (dx, dy) = (x - mx, y - my);
        cxx += v * dx * dx;
        cxy += v * dx * dy;
        cyy += v * dy * dy;
    }
    cxx /= w_sum;
    cxy /= w_sum;
    cyy /= w_sum;

    let [tx, ty] = table.center();
    let to_center = [tx - mx, ty - my];
    let (lam_max, axis) = principal_axis(cxx, cxy, cyy);
    let pixel = table.width_m.min(table.height_m) / crate::env::OBS_RES as f64;

    let (theta, length, back_off) = if lam_max <= 1e-12 * pixel * pixel {
        // Single pixel or coincident pixels: push it straight at the centre.
        let theta = if to_center[0] == 0.0 && to_center[1] == 0.0 {
            0.0
        } else {
            to_center[1].atan2(to_center[0]).rem_euclid(TAU)
        };
        (theta, to_center[0].hypot(to_center[1]), 0.5 * pixel)
    } else {
        let theta = orient_towards(axis, to_center);
        let length = 4.0 * lam_max.sqrt();
        (theta, length, 0.5 * length.min(table.max_wipe_length()))
    };
    let start = [mx - back_off * theta.cos(), my - back_off * theta.sin()];
    Ok(WipeAction::new(start[0], start[1], theta, length).clamp_to(table).0)
}

/// Largest eigenvalue and its axis angle in `[0, pi)` for a symmetric 2x2
/// matrix. Isotropic matrices report the x axis.
fn principal_axis(cxx: f64, cxy: f64, cyy: f64) -> (f64, f64) {
    let half_trace = 0.5 * (cxx + cyy);
    let radius = (0.25 * (cxx - cyy).powi(2) + cxy * cxy).sqrt();
    let lam_max = half_trace + radius;
    let scale = cxx.abs().max(cyy.abs()).max(f64::MIN_POSITIVE);
    if radius <= 1e-12 * scale {
        return (lam_max, 0.0);
    }
    let angle = (0.5 * (2.0 * cxy).atan2(cxx - cyy)).rem_euclid(PI);
    (lam_max, if angle >= PI { 0.0 } else { angle })
}

/// Picks `axis` or `axis + pi` so the wipe heads towards `target`; exact ties
/// go to the smaller angle.
fn orient_towards(axis: f64, target: [f64; 2]) -> f64 {
    let a = axis.rem_euclid(TAU);
    let b = (axis + PI).rem_euclid(TAU);
    let dot = |t: f64| t.cos() * target[0] + t.sin() * target[1];
    let (da, db) = (dot(a), dot(b));
    let tol = 1e-12 * target[0].hypot(target[1]).max(1e-300);
    if (da - db).abs() <= tol {
        a.min(b)
    } else if da > db {
        a
    } else {
        b
    }
}

pub struct RotatingCenter;

impl Policy for RotatingCenter {
    fn act(&mut self, _obs: &Observation, step: usize, table: &TableGeometry) -> Result<WipeAction> {
        Ok(rotating_center_action(step, table))
    }
}

pub struct CovarianceAxis;

impl Policy for CovarianceAxis {
    fn act(&mut self, obs: &Observation, _step: usize, table: &TableGeometry) -> Result<WipeAction> {
        covariance_axis_action(obs, table)
    }
}

#[derive(Serialize)]
struct PolicyRequest<'a> {
    obs: Vec<u8>,
    step: usize,
    table: &'a TableGeometry,
}

#[derive(Serialize)]
struct EpisodeNotice {
    episode_seed: u64,
}

#[derive(Deserialize)]
struct PolicyReply {
    action: [f64; 4],
}

/// Policy living in another process. One JSON line per request on its stdin
/// (`{"obs":[...],"step":k,"table":{...}}`), one reply per line on its stdout
/// (`{"action":[px,py,theta,length]}`). Episode boundaries are announced with
/// `{"episode_seed":s}`, which expects no reply.
pub struct ExternalPolicy {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl ExternalPolicy {
    pub fn spawn(command: &str) -> Result<Self> {
        let mut parts = command.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::Session("empty external policy command".into()))?;
        let mut child = Command::new(program)
            .args(parts)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Session(format!("cannot start `{command}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self { child, stdin, stdout })
    }

    fn send(&mut self, line: &str) -> Result<()> {
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::Session(format!("policy write failed: {e}")))
    }
}

impl Policy for ExternalPolicy {
    fn begin_episode(&mut self, seed: u64) -> Result<()> {
        let line = serde_json::to_string(&EpisodeNotice { episode_seed: seed })?;
        self.send(&line)
    }

    fn act(&mut self, obs: &Observation, step: usize, table: &TableGeometry) -> Result<WipeAction> {
        let req = PolicyRequest {
            obs: obs.as_flat().iter().map(|&v| u8::from(v > 0.0)).collect(),
            step,
            table,
        };
        self.send(&serde_json::to_string(&req)?)?;
        let mut line = String::new();
        let n = self
            .stdout
            .read_line(&mut line)
            .map_err(|e| Error::Session(format!("policy read failed: {e}")))?;
        if n == 0 {
            return Err(Error::Session("policy process closed its output".into()));
        }
        let reply: PolicyReply = serde_json::from_str(line.trim())
            .map_err(|e| Error::Session(format!("bad policy reply: {e}")))?;
        Ok(WipeAction::from_array(reply.action))
    }
}

impl Drop for ExternalPolicy {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    RotatingCenter,
    CovarianceAxis,
    /// Command line of a process speaking the external-policy protocol.
    External(String),
}

impl PolicyKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "rotating_center" | "rotating-center" => Ok(Self::RotatingCenter),
            "covariance_axis" | "covariance-axis" => Ok(Self::CovarianceAxis),
            other => match other.strip_prefix("external:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(Self::External(cmd.trim().to_string())),
                _ => Err(Error::config(format!(
                    "unknown policy `{other}` (rotating_center, covariance_axis, external:<command>)"
                ))),
            },
        }
    }

    pub fn name(&self) -> String {
        match self {
            Self::RotatingCenter => "rotating_center".into(),
            Self::CovarianceAxis => "covariance_axis".into(),
            Self::External(cmd) => format!("external:{cmd}"),
        }
    }

    pub fn instantiate(&self) -> Result<Box<dyn Policy>> {
        Ok(match self {
            Self::RotatingCenter => Box::new(RotatingCenter),
            Self::CovarianceAxis => Box::new(CovarianceAxis),
            Self::External(cmd) => Box::new(ExternalPolicy::spawn(cmd)?),
        })
    }
}

/// Result of a single evaluation episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub wipes: usize,
    pub success: bool,
    pub off_table_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_wipes: f64,
    pub std_wipes: f64,
    pub success_rate: f64,
    pub mean_off_table_events: f64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "episodes,mean_wipes,std_wipes,success_rate,mean_off_table_events";

    /// Aggregates outcomes; the result does not depend on their order beyond
    /// floating-point summation, which is done in integer arithmetic.
    pub fn from_outcomes(outcomes: &[EpisodeOutcome]) -> Self {
        let n = outcomes.len();
        let nf = n.max(1) as f64;
        let sum: u64 = outcomes.iter().map(|o| o.wipes as u64).sum();
        let sum_sq: u64 = outcomes.iter().map(|o| (o.wipes as u64).pow(2)).sum();
        let successes = outcomes.iter().filter(|o| o.success).count();
        let off: u64 = outcomes.iter().map(|o| o.off_table_events as u64).sum();
        let mean = sum as f64 / nf;
        let var = (sum_sq as f64 / nf - mean * mean).max(0.0);
        Self {
            episodes: n,
            mean_wipes: mean,
            std_wipes: var.sqrt(),
            success_rate: successes as f64 / nf,
            mean_off_table_events: off as f64 / nf,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.episodes, self.mean_wipes, self.std_wipes, self.success_rate, self.mean_off_table_events
        )
    }

    pub fn summary(&self, policy: &str) -> String {
        format!(
            "{policy}: {} episodes, wipes {:.3} +/- {:.3}, success {:.1}%, off-table events/episode {:.3}",
            self.episodes,
            self.mean_wipes,
            self.std_wipes,
            100.0 * self.success_rate,
            self.mean_off_table_events
        )
    }
}

/// Plays one episode. A failure to finish within `max_steps` counts as
/// `max_steps` wipes and no success.
pub fn run_episode(config: &EnvConfig, policy: &mut dyn Policy, seed: u64) -> Result<EpisodeOutcome> {
    let (mut env, mut obs) = WipingEnv::reset(config.clone(), seed)?;
    policy.begin_episode(seed)?;
    let mut success = env.is_done();
    while !env.is_done() {
        let action = policy.act(&obs, env.step_index(), &config.table)?;
        let r = env.step(action)?;
        obs = r.observation;
        success = r.done
            && crate::env::is_terminal(env.config(), env.cloud(), &obs);
    }
    Ok(EpisodeOutcome {
        wipes: env.step_index(),
        success,
        off_table_events: env.off_table_steps(),
    })
}

/// Per-episode outcomes for episodes seeded `seed, seed + 1, ...`.
pub fn evaluate_outcomes(
    config: &EnvConfig,
    policy: &PolicyKind,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeOutcome>> {
    if episodes == 0 {
        return Err(Error::config("episodes must be >= 1"));
    }
    config.validate()?;
    let seeds = (0..episodes as u64).map(|k| seed.wrapping_add(k));
    match policy {
        PolicyKind::External(_) => {
            let mut p = policy.instantiate()?;
            seeds.map(|s| run_episode(config, p.as_mut(), s)).collect()
        }
        _ => seeds
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|s| {
                let mut p = policy.instantiate()?;
                run_episode(config, p.as_mut(), s)
            })
            .collect(),
    }
}

pub fn evaluate_policy(
    config: &EnvConfig,
    policy: &PolicyKind,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    evaluate_outcomes(config, policy, episodes, seed).map(|o| EvalReport::from_outcomes(&o))
}

/// Same as [`evaluate_policy`] for a caller-supplied policy, run sequentially.
pub fn evaluate_with(
    config: &EnvConfig,
    policy: &mut dyn Policy,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    if episodes == 0 {
        return Err(Error::config("episodes must be >= 1"));
    }
    let outcomes = (0..episodes as u64)
        .map(|k| run_episode(config, policy, seed.wrapping_add(k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_outcomes(&outcomes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::TaskKind;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rotating_center_parameterisation() {
        let t = TableGeometry::default();
        let a0 = rotating_center_action(0, &t);
        assert_abs_diff_eq!(a0.px, 0.95, epsilon = 1e-12);
        assert_abs_diff_eq!(a0.py, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(a0.theta, PI, epsilon = 1e-12);
        assert_abs_diff_eq!(a0.length, 0.45, epsilon = 1e-12);

        let a4 = rotating_center_action(4, &t);
        assert_abs_diff_eq!(a4.px, 0.05, epsilon = 1e-12);
        assert_abs_diff_eq!(a4.py, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(a4.theta, 0.0, epsilon = 1e-12);

        assert_eq!(rotating_center_action(8, &t), a0);
        for k in 0..32 {
            assert!(rotating_center_action(k, &t).is_within(&t));
        }
    }

    #[test]
    fn rotating_center_ends_at_center() {
        let t = TableGeometry::new(1.2, 0.8).unwrap();
        for k in 0..8 {
            let end = rotating_center_action(k, &t).end_point();
            assert_abs_diff_eq!(end[0], 0.6, epsilon = 1e-9);
            assert_abs_diff_eq!(end[1], 0.4, epsilon = 1e-9);
        }
    }

    #[test]
    fn covariance_empty_obs_errors() {
        let t = TableGeometry::default();
        assert!(matches!(
            covariance_axis_action(&Observation::zeros(), &t),
            Err(Error::Policy(_))
        ));
    }

    #[test]
    fn covariance_single_pixel_heads_to_center() {
        let t = TableGeometry::default();
        let mut obs = Observation::zeros();
        obs.set(10, 32, 1.0);
        let a = covariance_axis_action(&obs, &t).unwrap();
        let px = Observation::pixel_center(10, 32, &t);
        let expected = (0.5 - px[1]).atan2(0.5 - px[0]).rem_euclid(TAU);
        assert_abs_diff_eq!(a.theta, expected, epsilon = 1e-12);
        // wipe passes through the pixel
        let end = a.end_point();
        let cross = (end[0] - a.px) * (px[1] - a.py) - (end[1] - a.py) * (px[0] - a.px);
        assert!(cross.abs() < 1e-9);
    }

    #[test]
    fn covariance_x_aligned_pixels() {
        let t = TableGeometry::default();
        let mut obs = Observation::zeros();
        for i in 5..25 {
            obs.set(i, 40, 1.0);
        }
        let a = covariance_axis_action(&obs, &t).unwrap();
        assert!(a.theta.abs() < 1e-12 || (a.theta - PI).abs() < 1e-12);
        // centroid is left of the centre, so head +x
        assert_eq!(a.theta, 0.0);
    }

    #[test]
    fn covariance_isotropic_tie_break() {
        let t = TableGeometry::default();
        let mut obs = Observation::zeros();
        // 4x4 blob whose centroid is exactly the table centre
        for i in 30..=33 {
            for j in 30..=33 {
                obs.set(i, j, 1.0);
            }
        }
        let a = covariance_axis_action(&obs, &t).unwrap();
        let again = covariance_axis_action(&obs, &t).unwrap();
        assert_eq!(a, again);
        assert_eq!(a.theta, 0.0);
    }

    #[test]
    fn covariance_scale_invariant() {
        let t = TableGeometry::default();
        let mut a = Observation::zeros();
        let mut b = Observation::zeros();
        for (i, j) in [(3, 4), (8, 12), (14, 15), (20, 27), (22, 25)] {
            a.set(i, j, 1.0);
            b.set(i, j, 0.25);
        }
        assert_eq!(
            covariance_axis_action(&a, &t).unwrap().theta,
            covariance_axis_action(&b, &t).unwrap().theta
        );
    }

    #[test]
    fn report_aggregation() {
        let outcomes = [
            EpisodeOutcome { wipes: 2, success: true, off_table_events: 0 },
            EpisodeOutcome { wipes: 4, success: true, off_table_events: 1 },
            EpisodeOutcome { wipes: 20, success: false, off_table_events: 3 },
        ];
        let r = EvalReport::from_outcomes(&outcomes);
        assert_eq!(r.episodes, 3);
        assert_abs_diff_eq!(r.mean_wipes, 26.0 / 3.0, epsilon = 1e-12);
        let var = (4.0 + 16.0 + 400.0) / 3.0 - (26.0f64 / 3.0).powi(2);
        assert_abs_diff_eq!(r.std_wipes, var.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(r.success_rate, 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.mean_off_table_events, 4.0 / 3.0, epsilon = 1e-12);
        let mut rev = outcomes;
        rev.reverse();
        assert_eq!(EvalReport::from_outcomes(&rev), r);
    }

    #[test]
    fn already_done_episodes_count_zero_wipes() {
        use crate::sde::{InitDistribution, InitialStateSpec};
        let cfg = EnvConfig {
            init: InitDistribution::Fixed(InitialStateSpec::single([0.5, 0.5], 0.0, 100)),
            ..EnvConfig::preset(TaskKind::GatherCrumbs)
        };
        let r = evaluate_policy(&cfg, &PolicyKind::RotatingCenter, 5, 0).unwrap();
        assert_eq!(r.mean_wipes, 0.0);
        assert_eq!(r.success_rate, 1.0);
    }

    #[test]
    fn evaluation_is_reproducible() {
        let cfg = EnvConfig::preset(TaskKind::CleanSpills);
        let a = evaluate_policy(&cfg, &PolicyKind::CovarianceAxis, 16, 100).unwrap();
        let b = evaluate_policy(&cfg, &PolicyKind::CovarianceAxis, 16, 100).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.success_rate));
    }

    #[test]
    fn policy_names_round_trip() {
        for k in [
            PolicyKind::RotatingCenter,
            PolicyKind::CovarianceAxis,
            PolicyKind::External("python3 agent.py".into()),
        ] {
            assert_eq!(PolicyKind::parse(&k.name()).unwrap(), k);
        }
        assert!(PolicyKind::parse("sac").is_err());
    }
}
