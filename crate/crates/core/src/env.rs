//! Episodic wiping environment.
//!
//! Each step takes one wipe, runs it through the particle simulator, and
//! scores the result. Observations are binary 64x64 masks of the dirty
//! particles still on the table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{seeded_rng, SimRng};
use crate::sde::{
    sample_initial_cloud, simulate_wipe, InitDistribution, ParticleCloud, SdeParams, TableGeometry,
    WipeAction,
};

pub const OBS_RES: usize = 64;
pub const OBS_LEN: usize = OBS_RES * OBS_RES;

/// Binary dirtiness mask. Pixel `(i, j)` covers
/// `[i w/64, (i+1) w/64) x [j h/64, (j+1) h/64)`; storage is row-major in
/// `(i, j)`, i.e. flat index `i * 64 + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    grid: Vec<f64>,
}

impl Default for Observation {
    fn default() -> Self {
        Self::zeros()
    }
}

impl Observation {
    pub fn zeros() -> Self {
        Self {
            grid: vec![0.0; OBS_LEN],
        }
    }

    pub fn from_flat(values: Vec<f64>) -> Result<Self> {
        if values.len() != OBS_LEN {
            return Err(Error::config(format!(
                "observation needs {OBS_LEN} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::config("observation values must lie in [0, 1]"));
        }
        Ok(Self { grid: values })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.grid[i * OBS_RES + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.grid[i * OBS_RES + j] = value;
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.grid
    }

    /// Total dirty mass; equals the number of set pixels for binary masks.
    pub fn mass(&self) -> f64 {
        self.grid.iter().sum()
    }

    pub fn set_count(&self) -> usize {
        self.grid.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn is_clean(&self) -> bool {
        self.grid.iter().all(|&v| v == 0.0)
    }

    /// Table coordinates of the centre of pixel `(i, j)`.
    pub fn pixel_center(i: usize, j: usize, table: &TableGeometry) -> [f64; 2] {
        let cw = table.width_m / OBS_RES as f64;
        let ch = table.height_m / OBS_RES as f64;
        [(i as f64 + 0.5) * cw, (j as f64 + 0.5) * ch]
    }

    /// Set pixels as `(i, j, value)`.
    pub fn set_pixels(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.grid
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > 0.0)
            .map(|(k, &v)| (k / OBS_RES, k % OBS_RES, v))
    }
}

/// Pixel containing an on-table point.
pub fn pixel_of(x: f64, y: f64, table: &TableGeometry) -> (usize, usize) {
    let i = ((x / table.width_m) * OBS_RES as f64).floor() as usize;
    let j = ((y / table.height_m) * OBS_RES as f64).floor() as usize;
    (i.min(OBS_RES - 1), j.min(OBS_RES - 1))
}

pub fn render_observation(cloud: &ParticleCloud, table: &TableGeometry) -> Observation {
    let mut obs = Observation::zeros();
    for (x, y) in cloud.dirty_on_table(table) {
        let (i, j) = pixel_of(x, y, table);
        obs.set(i, j, 1.0);
    }
    obs
}

/// Negative mean distance of the dirty on-table particles to the table
/// centre, or `None` when there are none left.
pub fn reward_gathering(cloud: &ParticleCloud, table: &TableGeometry) -> Option<f64> {
    mean_center_distance(cloud, table).map(|d| -d)
}

pub fn mean_center_distance(cloud: &ParticleCloud, table: &TableGeometry) -> Option<f64> {
    let [cx, cy] = table.center();
    let (sum, n) = cloud
        .dirty_on_table(table)
        .fold((0.0, 0usize), |(s, n), (x, y)| (s + (x - cx).hypot(y - cy), n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Reduction in dirty pixel mass between two observations.
pub fn reward_spill_reduction(before: &Observation, after: &Observation) -> f64 {
    before
        .as_flat()
        .iter()
        .zip(after.as_flat())
        .map(|(b, a)| b - a)
        .sum()
}

pub fn off_table_penalty(cloud: &ParticleCloud, table: &TableGeometry, mu: f64) -> f64 {
    if cloud.dirty().any(|(x, y)| !table.contains(x, y)) {
        -mu
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    GatherCrumbs,
    CleanSpills,
}

impl TaskKind {
    /// `(alpha, lambda)` used by the task presets.
    pub fn sde_coefficients(self) -> (f64, f64) {
        match self {
            TaskKind::GatherCrumbs => (1e-2, 0.0),
            TaskKind::CleanSpills => (1e-2, 2.0),
        }
    }
}

/// Termination test for the gathering task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatherCriterion {
    /// Every dirty on-table particle within `gather_radius_m` of the centre.
    Radius,
    /// Mean centre distance below `gather_error_threshold`.
    MeanError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub table: TableGeometry,
    pub sde: SdeParams,
    pub task: TaskKind,
    pub init: InitDistribution,
    pub max_steps: usize,
    pub penalty_mu: f64,
    pub gather_radius_m: f64,
    pub gather_error_threshold: f64,
    pub gather_criterion: GatherCriterion,
    /// Chance-constraint level, kept for reporting only; the constraint is
    /// relaxed into `penalty_mu`.
    pub delta: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self::preset(TaskKind::GatherCrumbs)
    }
}

impl EnvConfig {
    pub fn preset(task: TaskKind) -> Self {
        let (alpha, lambda) = task.sde_coefficients();
        Self {
            table: TableGeometry::default(),
            sde: SdeParams {
                alpha,
                lambda,
                ..SdeParams::default()
            },
            task,
            init: InitDistribution::training(),
            max_steps: 20,
            penalty_mu: 1.0,
            gather_radius_m: 0.15,
            gather_error_threshold: 0.02,
            gather_criterion: GatherCriterion::Radius,
            delta: 0.05,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.table.validate()?;
        self.sde.validate()?;
        self.init.validate()?;
        if self.max_steps == 0 {
            return Err(Error::config("env.max_steps must be >= 1"));
        }
        if !(self.penalty_mu >= 0.0 && self.penalty_mu.is_finite()) {
            return Err(Error::config("env.penalty_mu must be finite and >= 0"));
        }
        if !(self.gather_radius_m > 0.0) {
            return Err(Error::config("env.gather_radius_m must be > 0"));
        }
        if !(self.gather_error_threshold > 0.0) {
            return Err(Error::config("env.gather_error_threshold must be > 0"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config("env.delta must lie in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub step: usize,
    pub particle_count: usize,
    pub off_table_count: usize,
    pub wiped_count: usize,
    /// Zero when no dirty particle is left on the table.
    pub mean_center_distance: f64,
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Termination rule shared by reset and step.
pub fn is_terminal(config: &EnvConfig, cloud: &ParticleCloud, obs: &Observation) -> bool {
    match config.task {
        TaskKind::CleanSpills => obs.is_clean(),
        TaskKind::GatherCrumbs => {
            let table = &config.table;
            match config.gather_criterion {
                GatherCriterion::Radius => {
                    let [cx, cy] = table.center();
                    let r = config.gather_radius_m;
                    cloud
                        .dirty_on_table(table)
                        .all(|(x, y)| (x - cx).hypot(y - cy) <= r)
                }
                GatherCriterion::MeanError => mean_center_distance(cloud, table)
                    .is_none_or(|d| d < config.gather_error_threshold),
            }
        }
    }
}

/// State of one episode.
#[derive(Debug, Clone)]
pub struct WipingEnv {
    config: EnvConfig,
    cloud: ParticleCloud,
    obs: Observation,
    rng: SimRng,
    step: usize,
    done: bool,
    off_table_steps: usize,
}

impl WipingEnv {
    /// Starts an episode. The same `(config, seed)` always yields the same
    /// initial cloud and random stream.
    pub fn reset(config: EnvConfig, seed: u64) -> Result<(Self, Observation)> {
        config.validate()?;
        let mut rng = seeded_rng(seed);
        let spec = config.init.realize(&config.table, &mut rng);
        let cloud = sample_initial_cloud(&spec, &config.table, &mut rng)?;
        Self::from_cloud(config, cloud, rng)
    }

    /// Starts an episode from a given cloud, e.g. one ingested from a mask.
    pub fn with_cloud(config: EnvConfig, cloud: ParticleCloud, seed: u64) -> Result<(Self, Observation)> {
        config.validate()?;
        Self::from_cloud(config, cloud, seeded_rng(seed))
    }

    fn from_cloud(config: EnvConfig, cloud: ParticleCloud, rng: SimRng) -> Result<(Self, Observation)> {
        let obs = render_observation(&cloud, &config.table);
        let done = is_terminal(&config, &cloud, &obs);
        let env = Self {
            config,
            cloud,
            obs: obs.clone(),
            rng,
            step: 0,
            done,
            off_table_steps: 0,
        };
        Ok((env, obs))
    }

    pub fn step(&mut self, action: WipeAction) -> Result<StepResult> {
        if self.done {
            return Err(Error::Protocol("episode_done".into()));
        }
        let table = self.config.table;
        let (action, clamped) = action.clamp_to(&table);
        if clamped {
            log::debug!("action outside the action box was clamped");
        }
        let before = std::mem::take(&mut self.obs);
        simulate_wipe(&mut self.cloud, &action, &table, &self.config.sde, &mut self.rng);
        let after = render_observation(&self.cloud, &table);

        let task_reward = match self.config.task {
            TaskKind::GatherCrumbs => reward_gathering(&self.cloud, &table).unwrap_or(0.0),
            TaskKind::CleanSpills => reward_spill_reduction(&before, &after),
        };
        let penalty = off_table_penalty(&self.cloud, &table, self.config.penalty_mu);
        if self.cloud.dirty().any(|(x, y)| !table.contains(x, y)) {
            self.off_table_steps += 1;
        }

        self.step += 1;
        self.done = is_terminal(&self.config, &self.cloud, &after) || self.step >= self.config.max_steps;
        self.obs = after.clone();
        let mut info = self.info();
        info.clamped = clamped;
        Ok(StepResult {
            observation: after,
            reward: task_reward + penalty,
            done: self.done,
            info,
        })
    }

    pub fn info(&self) -> StepInfo {
        let table = &self.config.table;
        StepInfo {
            step: self.step,
            particle_count: self.cloud.len(),
            off_table_count: self.cloud.off_table_count(table),
            wiped_count: self.cloud.wiped_count(),
            mean_center_distance: mean_center_distance(&self.cloud, table).unwrap_or(0.0),
            clamped: false,
        }
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Steps so far that ended with at least one particle off the table.
    pub fn off_table_steps(&self) -> usize {
        self.off_table_steps
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn cloud(&self) -> &ParticleCloud {
        &self.cloud
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }
}
