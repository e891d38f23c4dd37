//! Mobile-manipulator model: nonholonomic base plus a serial arm.

pub mod chain;
pub mod collision;
pub mod description;
pub mod transform;

pub use chain::{dynamics_jacobians, dynamics_step, ControlInput, KinematicChain, Kinematics, RobotState};
pub use collision::{
    facet_index, obstacle_residual, self_collision_residuals, sphere_positions, PolytopeObstacle, Sphere,
    SphereCover, SphereSpec,
};
pub use description::{ControlBounds, ObstacleSpec, RobotDescription, RobotModel, Scene, SceneDescription};
pub use transform::{Transform, TransformSpec};
