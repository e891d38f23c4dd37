//! Run configuration: JSON file, task presets, validation and hashing.

use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::env::{EnvConfig, TaskKind};
use crate::error::{Error, Result};
use crate::robot::{RobotDescription, RobotState, SceneDescription};
use crate::sde::{InitialStateSpec, WipeAction};
use crate::trajopt::{CostWeights, ReferenceOptions, RotationMask, SolverOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskSource {
    pub path: String,
    /// Inflate the binary mask by two pixels before sampling.
    pub dilate: bool,
    /// Total particles spread over the set pixels.
    pub particle_count: usize,
}

impl Default for MaskSource {
    fn default() -> Self {
        Self {
            path: String::new(),
            dilate: false,
            particle_count: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateOptions {
    pub action: [f64; 4],
    /// Fixed initial mixture; falls back to `env.init` when unset.
    pub initial: Option<InitialStateSpec>,
    /// Initial particles from a 64x64 grayscale mask instead.
    pub mask: Option<MaskSource>,
    /// Blur radius (pixels) for an extra density image; none when unset.
    pub density_sigma_px: Option<f64>,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            action: [0.35, 0.5, 0.0, 0.3],
            initial: None,
            mask: None,
            density_sigma_px: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanOptions {
    /// Table-frame wipe `(px, py, theta, length)`.
    pub action: [f64; 4],
    /// Start state `(rx, ry, psi, q...)`; the robot's home state when unset.
    pub x0: Option<Vec<f64>>,
    pub dt: f64,
    /// Wipe speed; `env.sde.speed` when unset.
    pub speed: Option<f64>,
    /// Tool orientation in the table frame at `theta = 0`, row-major.
    pub tool_in_table: [[f64; 3]; 3],
    pub weights: CostWeights,
    pub rotation_mask: RotationMask,
    pub enforce_joint_limits: bool,
    pub reference: ReferenceOptions,
    pub solver: SolverOptions,
}

impl Default for PlanOptions {
    fn default() -> Self {
        Self {
            action: [0.3, 0.3, 0.0, 0.3],
            x0: None,
            dt: 0.1,
            speed: None,
            tool_in_table: [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]],
            weights: CostWeights::default(),
            rotation_mask: RotationMask::default(),
            enforce_joint_limits: false,
            reference: ReferenceOptions::default(),
            solver: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServeOptions {
    /// Listen on TCP instead of standard streams.
    pub port: Option<u16>,
    pub host: String,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self {
            port: None,
            host: "127.0.0.1".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub env: EnvConfig,
    pub robot: String,
    pub scene: String,
    pub output_dir: String,
    pub policy: String,
    pub episodes: usize,
    pub simulate: SimulateOptions,
    pub plan: PlanOptions,
    pub serve: ServeOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_task(TaskKind::GatherCrumbs)
    }
}

impl RunConfig {
    pub fn for_task(task: TaskKind) -> Self {
        Self {
            seed: 0,
            env: EnvConfig::preset(task),
            robot: "builtin:generic_7dof".into(),
            scene: "builtin:kitchen_table".into(),
            output_dir: "out".into(),
            policy: "rotating_center".into(),
            episodes: 1000,
            simulate: SimulateOptions::default(),
            plan: PlanOptions::default(),
            serve: ServeOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        if self.episodes == 0 {
            return Err(Error::config("episodes must be >= 1"));
        }
        crate::baseline::PolicyKind::parse(&self.policy)
            .map_err(|e| Error::config(format!("policy: {e}")))?;
        if self.output_dir.is_empty() {
            return Err(Error::config("output_dir must not be empty"));
        }
        let a = WipeAction::from_array(self.simulate.action);
        if !a.to_array().iter().all(|v| v.is_finite()) || a.length < 0.0 {
            return Err(Error::config("simulate.action must be finite with length >= 0"));
        }
        if let Some(init) = &self.simulate.initial {
            init.validate().map_err(|e| Error::config(format!("simulate.initial: {e}")))?;
        }
        if let Some(m) = &self.simulate.mask {
            if !Path::new(&m.path).is_file() {
                return Err(Error::config(format!("simulate.mask.path: no file at `{}`", m.path)));
            }
            if m.particle_count == 0 {
                return Err(Error::config("simulate.mask.particle_count must be >= 1"));
            }
        }
        if let Some(s) = self.simulate.density_sigma_px {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::config("simulate.density_sigma_px must be > 0"));
            }
        }
        self.validate_plan()
    }

    fn validate_plan(&self) -> Result<()> {
        let p = &self.plan;
        if !(p.dt > 0.0 && p.dt.is_finite()) {
            return Err(Error::config("plan.dt must be > 0"));
        }
        if let Some(v) = p.speed {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config("plan.speed must be > 0"));
            }
        }
        p.weights.validate().map_err(|e| Error::config(format!("plan.{e}")))?;
        p.solver.validate()?;
        let robot = self.load_robot()?;
        self.load_scene()?;
        if let Some(x0) = &p.x0 {
            if x0.len() != robot.chain.state_dim() {
                return Err(Error::config(format!(
                    "plan.x0 needs {} entries for robot `{}`",
                    robot.chain.state_dim(),
                    robot.name
                )));
            }
        }
        crate::robot::TransformSpec {
            rotation: p.tool_in_table,
            translation: [0.0; 3],
        }
        .to_transform("plan.tool_in_table")?;
        Ok(())
    }

    pub fn load_robot(&self) -> Result<crate::robot::RobotModel> {
        RobotDescription::load(Path::new(&self.robot))
            .and_then(|d| d.build())
            .map_err(|e| Error::config(format!("robot `{}`: {e}", self.robot)))
    }

    pub fn load_scene(&self) -> Result<crate::robot::Scene> {
        SceneDescription::load(Path::new(&self.scene))
            .and_then(|d| d.build())
            .map_err(|e| Error::config(format!("scene `{}`: {e}", self.scene)))
    }

    pub fn plan_x0(&self, model: &crate::robot::RobotModel) -> RobotState {
        match &self.plan.x0 {
            Some(v) => RobotState::from_slice(v),
            None => model.home_state.clone(),
        }
    }

    /// Canonical JSON, as exported next to every artifact.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialises")
    }

    /// Hex SHA-256 of the canonical JSON with `output_dir` blanked, so moving
    /// the output does not change the hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir.clear();
        hex::encode(Sha256::digest(c.canonical_json().as_bytes()))
    }
}

/// Parsed configuration plus keys that were ignored.
#[derive(Debug, Clone)]
pub struct ParsedConfig {
    pub config: RunConfig,
    pub unknown_keys: Vec<String>,
}

/// Merges `overlay` into `base`. Objects merge key by key, except that an
/// object whose `kind` tag differs from the base replaces it.
fn merge(base: &mut Value, overlay: Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            let retag = match (b.get("kind"), o.get("kind")) {
                (Some(x), Some(y)) => x != y,
                _ => false,
            };
            if retag {
                *b = o;
                return;
            }
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn parse_config_str(text: &str) -> Result<ParsedConfig> {
    let user: Value = if text.trim().is_empty() {
        Value::Object(Default::default())
    } else {
        serde_json::from_str(text).map_err(|e| Error::config(format!("config is not valid JSON: {e}")))?
    };
    if !user.is_object() {
        return Err(Error::config("config must be a JSON object"));
    }
    let task = match user.pointer("/env/task") {
        Some(t) => serde_json::from_value::<TaskKind>(t.clone())
            .map_err(|e| Error::config(format!("field `env.task`: {e}")))?,
        None => TaskKind::GatherCrumbs,
    };
    let mut merged = serde_json::to_value(RunConfig::for_task(task))?;
    merge(&mut merged, user);

    let mut unknown_keys = Vec::new();
    let mut track = |path: serde_ignored::Path<'_>| unknown_keys.push(path.to_string());
    let ignored = serde_ignored::Deserializer::new(merged, &mut track);
    let config: RunConfig = serde_path_to_error::deserialize(ignored)
        .map_err(|e| Error::config(format!("field `{}`: {}", e.path(), e.inner())))?;
    for key in &unknown_keys {
        warn!("ignoring unknown config key `{key}`");
    }
    config.validate()?;
    Ok(ParsedConfig { config, unknown_keys })
}

pub fn parse_config(path: &Path) -> Result<ParsedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config `{}`: {e}", path.display())))?;
    parse_config_str(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let c = parse_config_str("").unwrap().config;
        assert_eq!(c.env.table.width_m, 1.0);
        assert_eq!(c.env.table.height_m, 1.0);
        assert_eq!(c.env.sde.dt, 0.1);
        assert_eq!(c.env.sde.speed, 0.15);
        assert_eq!(c.env.sde.wiper_long_m, 0.30);
        assert_eq!(c.env.sde.wiper_short_m, 0.05);
        assert_eq!(c.env.max_steps, 20);
        assert_eq!(c.env.init.particle_count(), 1000);
        assert_eq!(parse_config_str("{}").unwrap().config, c);
    }

    #[test]
    fn task_selects_preset() {
        let c = parse_config_str(r#"{"env":{"task":"clean_spills"}}"#).unwrap().config;
        assert_eq!(c.env.task, TaskKind::CleanSpills);
        assert_eq!(c.env.sde.lambda, 2.0);
        let c = parse_config_str(r#"{"env":{"task":"clean_spills","sde":{"lambda":5.0}}}"#)
            .unwrap()
            .config;
        assert_eq!(c.env.sde.lambda, 5.0);
        assert_eq!(c.env.sde.speed, 0.15);
    }

    #[test]
    fn negative_lambda_rejected() {
        let err = parse_config_str(r#"{"env":{"sde":{"lambda":-1}}}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("lambda"), "{err}");
    }

    #[test]
    fn wrong_type_names_field() {
        let err = parse_config_str(r#"{"env":{"table":{"width_m":"wide"}}}"#).unwrap_err();
        assert!(err.to_string().contains("env.table.width_m"), "{err}");
    }

    #[test]
    fn unknown_keys_are_reported() {
        let p = parse_config_str(r#"{"colour":"red","env":{"sde":{"speeed":1}}}"#).unwrap();
        assert!(p.unknown_keys.iter().any(|k| k == "colour"), "{:?}", p.unknown_keys);
        assert!(p.unknown_keys.iter().any(|k| k == "env.sde.speeed"), "{:?}", p.unknown_keys);
    }

    #[test]
    fn init_kind_replaces_preset() {
        let text = r#"{"env":{"init":{"kind":"fixed","components":[{"mean":[0.5,0.5],"std":0.1,"weight":1}]}}}"#;
        let c = parse_config_str(text).unwrap().config;
        assert!(matches!(c.env.init, crate::sde::InitDistribution::Fixed(_)));
    }

    #[test]
    fn round_trip() {
        let text = r#"{"seed":9,"env":{"task":"clean_spills","penalty_mu":0.5},"plan":{"dt":0.05}}"#;
        let a = parse_config_str(text).unwrap().config;
        let b = parse_config_str(&a.canonical_json()).unwrap().config;
        assert_eq!(a, b);
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn missing_robot_file() {
        let err = parse_config_str(r#"{"robot":"/nonexistent/robot.json"}"#).unwrap_err();
        assert!(err.to_string().contains("robot"), "{err}");
    }
}
