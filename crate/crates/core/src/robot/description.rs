//! JSON robot descriptions and obstacle scenes.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::chain::{Joint, KinematicChain, RobotState};
use super::collision::{PolytopeObstacle, SphereCover};
use super::transform::{Transform, TransformSpec};
use crate::error::{Error, Result};

const GENERIC_7DOF_JSON: &str = include_str!("../../data/robots/generic_7dof.json");
const PLANAR_2R_JSON: &str = include_str!("../../data/robots/planar_2r.json");
const ONE_BOX_SCENE_JSON: &str = include_str!("../../data/scenes/planar_one_box.json");
const KITCHEN_SCENE_JSON: &str = include_str!("../../data/scenes/kitchen_table.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    /// `(omega_x, omega_y, omega_z, v_x, v_y, v_z)` in the arm-root frame.
    pub screw: [f64; 6],
    #[serde(default)]
    pub link_home: TransformSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<[f64; 2]>,
}

/// Box bounds on the control vector `(ur, upsi, qdot...)`. Coordinates with
/// equal bounds are held fixed by the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ControlBounds {
    pub fn unbounded(dim: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.lower.len() != dim || self.upper.len() != dim {
            return Err(Error::config(format!(
                "control_bounds need {dim} entries (ur, upsi, one per joint)"
            )));
        }
        for (i, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::config(format!("control_bounds[{i}]: lower > upper")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotDescription {
    pub name: String,
    #[serde(default)]
    pub base_height: f64,
    #[serde(default)]
    pub mount: TransformSpec,
    pub joints: Vec<JointSpec>,
    pub ee_home: TransformSpec,
    #[serde(default)]
    pub cover: SphereCover,
    pub control_bounds: ControlBounds,
    /// Default start state `(rx, ry, psi, q...)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub home_state: Option<Vec<f64>>,
}

/// Everything the planner needs about the robot.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    pub name: String,
    pub chain: KinematicChain,
    pub cover: SphereCover,
    pub bounds: ControlBounds,
    pub home_state: RobotState,
}

impl RobotModel {
    pub fn joint_limits(&self) -> Vec<Option<[f64; 2]>> {
        self.chain.joints.iter().map(|j| j.limits).collect()
    }
}

impl RobotDescription {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::config(format!("robot description field `{}`: {}", e.path(), e.inner())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        match builtin_robot(path.to_str().unwrap_or_default()) {
            Some(d) => Ok(d),
            None => Self::from_json(&std::fs::read_to_string(path)?),
        }
    }

    /// Generic seven-joint arm on a differential-drive base.
    pub fn generic_7dof() -> Self {
        Self::from_json(GENERIC_7DOF_JSON).expect("bundled robot description parses")
    }

    /// Planar two-link arm with unit links and a fixed base, for analytic checks.
    pub fn planar_2r() -> Self {
        Self::from_json(PLANAR_2R_JSON).expect("bundled robot description parses")
    }

    pub fn build(&self) -> Result<RobotModel> {
        let joints = self
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| {
                if let Some([lo, hi]) = j.limits {
                    if !(lo <= hi) {
                        return Err(Error::config(format!("joints[{i}].limits: lower > upper")));
                    }
                }
                Ok(Joint {
                    omega: Vector3::new(j.screw[0], j.screw[1], j.screw[2]),
                    v: Vector3::new(j.screw[3], j.screw[4], j.screw[5]),
                    link_home: j.link_home.to_transform(&format!("joints[{i}].link_home"))?,
                    limits: j.limits,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let chain = KinematicChain {
            base_height: self.base_height,
            mount: self.mount.to_transform("mount")?,
            joints,
            ee_home: self.ee_home.to_transform("ee_home")?,
        };
        chain.validate()?;
        self.cover.validate(&chain)?;
        self.control_bounds.validate(chain.control_dim())?;
        let home_state = match &self.home_state {
            Some(v) if v.len() == chain.state_dim() => RobotState::from_slice(v),
            Some(_) => {
                return Err(Error::config(format!(
                    "home_state needs {} entries",
                    chain.state_dim()
                )))
            }
            None => RobotState::zeros(chain.dof()),
        };
        Ok(RobotModel {
            name: self.name.clone(),
            chain,
            cover: self.cover.clone(),
            bounds: self.control_bounds.clone(),
            home_state,
        })
    }
}

fn builtin_robot(name: &str) -> Option<RobotDescription> {
    match name {
        "builtin:generic_7dof" => Some(RobotDescription::generic_7dof()),
        "builtin:planar_2r" => Some(RobotDescription::planar_2r()),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ObstacleSpec {
    Box {
        center: [f64; 3],
        half_extents: [f64; 3],
    },
    Polytope(PolytopeObstacle),
}

impl ObstacleSpec {
    pub fn to_polytope(&self) -> Result<PolytopeObstacle> {
        match self {
            ObstacleSpec::Box {
                center,
                half_extents,
            } => PolytopeObstacle::from_box(*center, *half_extents),
            ObstacleSpec::Polytope(p) => {
                p.validate()?;
                Ok(p.clone())
            }
        }
    }
}

/// Table placement and obstacles around it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescription {
    #[serde(default)]
    pub table_pose: TransformSpec,
    #[serde(default)]
    pub obstacles: Vec<ObstacleSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub table_pose: Transform,
    pub obstacles: Vec<PolytopeObstacle>,
}

impl SceneDescription {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::config(format!("scene field `{}`: {}", e.path(), e.inner())))
    }

    pub fn load(path: &Path) -> Result<Self> {
        match path.to_str().unwrap_or_default() {
            "builtin:planar_one_box" => Self::from_json(ONE_BOX_SCENE_JSON),
            "builtin:kitchen_table" => Self::from_json(KITCHEN_SCENE_JSON),
            _ => Self::from_json(&std::fs::read_to_string(path)?),
        }
    }

    /// Straight-line 2R scene with one box on the path.
    pub fn planar_one_box() -> Self {
        Self::from_json(ONE_BOX_SCENE_JSON).expect("bundled scene parses")
    }

    /// Table in front of the generic robot with a box on it.
    pub fn kitchen_table() -> Self {
        Self::from_json(KITCHEN_SCENE_JSON).expect("bundled scene parses")
    }

    pub fn build(&self) -> Result<Scene> {
        Ok(Scene {
            table_pose: self.table_pose.to_transform("table_pose")?,
            obstacles: self
                .obstacles
                .iter()
                .enumerate()
                .map(|(i, o)| {
                    o.to_polytope()
                        .map_err(|e| Error::config(format!("obstacles[{i}]: {e}")))
                })
                .collect::<Result<_>>()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_descriptions_build() {
        let g = RobotDescription::generic_7dof().build().unwrap();
        assert_eq!(g.chain.dof(), 7);
        assert_eq!(g.bounds.lower.len(), 9);
        let p = RobotDescription::planar_2r().build().unwrap();
        assert_eq!(p.chain.dof(), 2);
        SceneDescription::planar_one_box().build().unwrap();
        SceneDescription::kitchen_table().build().unwrap();
    }

    #[test]
    fn bad_field_is_named() {
        let mut v: serde_json::Value = serde_json::from_str(GENERIC_7DOF_JSON).unwrap();
        v["joints"][2]["screw"] = serde_json::json!("oops");
        let err = RobotDescription::from_json(&v.to_string()).unwrap_err().to_string();
        assert!(err.contains("joints[2].screw"), "{err}");
    }

    #[test]
    fn out_of_range_sphere_link() {
        let mut d = RobotDescription::planar_2r();
        d.cover.spheres[0].link = 17;
        assert!(matches!(d.build(), Err(Error::Config(_))));
    }

    #[test]
    fn box_converts_to_unit_rows() {
        let scene = SceneDescription::from_json(
            r#"{"obstacles":[{"box":{"center":[1,2,3],"half_extents":[0.1,0.2,0.3]}}]}"#,
        )
        .unwrap()
        .build()
        .unwrap();
        let o = &scene.obstacles[0];
        assert_eq!(o.a.len(), 6);
        assert_eq!(o.b, vec![0.1, 0.1, 0.2, 0.2, 0.3, 0.3]);
        assert_eq!(o.c, [1.0, 2.0, 3.0]);
    }
}
