//! Table-wiping planning toolkit.
//!
//! * [`sde`]: jump-diffusion simulation of crumbs and spills under a wiper.
//! * [`env`]: episodic wiping environment with rendered 64x64 observations.
//! * [`baseline`]: reference policies and Monte-Carlo evaluation.
//! * [`robot`]: mobile-manipulator kinematics, sphere cover and polytope
//!   collision constraints.
//! * [`trajopt`]: wipe-to-pose references and a single-shooting SQP solver.
//! * [`config`], [`protocol`], [`harness`], [`mask`]: configuration files,
//!   the JSON-lines environment server and artifact export.

pub mod baseline;
pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod mask;
pub mod protocol;
pub mod rng;
pub mod robot;
pub mod sde;
pub mod trajopt;

pub use error::{Error, Result};
