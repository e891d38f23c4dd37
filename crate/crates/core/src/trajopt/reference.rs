//! End-effector reference trajectories for a wipe.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::robot::transform::rot_z;
use crate::robot::Transform;
use crate::sde::WipeAction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Approach,
    Wipe,
    Retreat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseSample {
    pub time: f64,
    pub position: Vector3<f64>,
    pub rotation: Matrix3<f64>,
    pub phase: Phase,
}

/// Poses sampled every `dt` seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrajectory {
    pub dt: f64,
    pub samples: Vec<PoseSample>,
    /// Start and end time of the wipe segment, when there is one.
    pub wipe_interval: Option<(f64, f64)>,
}

impl PoseTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of control intervals, `len - 1`.
    pub fn horizon(&self) -> usize {
        self.samples.len().saturating_sub(1)
    }

    /// Holds `pose` for `steps` intervals.
    pub fn constant(pose: &Transform, steps: usize, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        let samples = (0..=steps.max(1))
            .map(|k| PoseSample {
                time: k as f64 * dt,
                position: pose.translation,
                rotation: pose.rotation,
                phase: Phase::Wipe,
            })
            .collect();
        Ok(Self {
            dt,
            samples,
            wipe_interval: None,
        })
    }

    /// Constant-speed straight line with a fixed orientation.
    pub fn straight_line(
        from: Vector3<f64>,
        to: Vector3<f64>,
        rotation: Matrix3<f64>,
        duration: f64,
        dt: f64,
    ) -> Result<Self> {
        check_dt(dt)?;
        if !(duration > 0.0) {
            return Err(Error::Degenerate("line duration must be positive".into()));
        }
        let segments = [Segment {
            duration,
            from: Transform::new(rotation, from),
            to: Transform::new(rotation, to),
            phase: Phase::Wipe,
        }];
        Ok(sample_segments(&segments, dt))
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::Degenerate("dt_traj must be positive".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReferenceOptions {
    /// Linear speed of approach and retreat; the wipe speed when unset.
    pub approach_speed: Option<f64>,
    /// Rotation rate used while blending orientations, rad/s.
    pub rotation_rate: f64,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            approach_speed: None,
            rotation_rate: 0.5,
        }
    }
}

struct Segment {
    duration: f64,
    from: Transform,
    to: Transform,
    phase: Phase,
}

impl Segment {
    fn pose_at(&self, t: f64) -> (Vector3<f64>, Matrix3<f64>) {
        let s = if self.duration > 0.0 {
            (t / self.duration).clamp(0.0, 1.0)
        } else {
            1.0
        };
        let p = self.from.translation + (self.to.translation - self.from.translation) * s;
        if self.from.rotation == self.to.rotation {
            return (p, self.from.rotation);
        }
        let qa = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.from.rotation));
        let qb = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.to.rotation));
        let q = qa.slerp(&qb, s);
        (p, *q.to_rotation_matrix().matrix())
    }
}

fn rotation_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let cos = (((a.transpose() * b).trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    cos.acos()
}

/// Approach from the current tool pose to the wipe start, the wipe itself at
/// speed `v` along `theta` (table frame), and the retreat back to the tool
/// pose. The wipe orientation is `Rz(theta) * tool_in_table`.
pub fn build_reference(
    action: &WipeAction,
    table_pose: &Transform,
    tool_pose: &Transform,
    tool_in_table: &Matrix3<f64>,
    v: f64,
    dt: f64,
) -> Result<PoseTrajectory> {
    build_reference_with(
        action,
        table_pose,
        tool_pose,
        tool_in_table,
        v,
        dt,
        &ReferenceOptions::default(),
    )
}

pub fn build_reference_with(
    action: &WipeAction,
    table_pose: &Transform,
    tool_pose: &Transform,
    tool_in_table: &Matrix3<f64>,
    v: f64,
    dt: f64,
    options: &ReferenceOptions,
) -> Result<PoseTrajectory> {
    check_dt(dt)?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Degenerate("wipe speed must be positive".into()));
    }
    if !(action.length >= 0.0 && action.length.is_finite()) {
        return Err(Error::Degenerate("wipe length must be finite and >= 0".into()));
    }
    let approach_speed = options.approach_speed.unwrap_or(v);
    if !(approach_speed > 0.0 && options.rotation_rate > 0.0) {
        return Err(Error::Degenerate("approach speed and rotation rate must be positive".into()));
    }

    let wipe_rot = table_pose.rotation * rot_z(action.theta) * tool_in_table;
    let start = Transform::new(wipe_rot, table_pose.apply(&Vector3::new(action.px, action.py, 0.0)));
    let [ex, ey] = action.end_point();
    let end = Transform::new(wipe_rot, table_pose.apply(&Vector3::new(ex, ey, 0.0)));

    let transfer = |a: &Transform, b: &Transform| {
        let d = (b.translation - a.translation).norm() / approach_speed;
        let r = rotation_angle(&a.rotation, &b.rotation) / options.rotation_rate;
        d.max(r)
    };
    let segments = [
        Segment {
            duration: transfer(tool_pose, &start),
            from: *tool_pose,
            to: start,
            phase: Phase::Approach,
        },
        Segment {
            duration: action.length / v,
            from: start,
            to: end,
            phase: Phase::Wipe,
        },
        Segment {
            duration: transfer(&end, tool_pose),
            from: end,
            to: *tool_pose,
            phase: Phase::Retreat,
        },
    ];
    Ok(sample_segments(&segments, dt))
}

fn sample_segments(segments: &[Segment], dt: f64) -> PoseTrajectory {
    let total: f64 = segments.iter().map(|s| s.duration).sum();
    let steps = ((total / dt) - 1e-9).ceil().max(1.0) as usize;
    let mut wipe_interval = None;
    let mut t0 = 0.0;
    for s in segments {
        if s.phase == Phase::Wipe && s.duration > 0.0 {
            wipe_interval = Some((t0, t0 + s.duration));
        }
        t0 += s.duration;
    }

    let samples = (0..=steps)
        .map(|k| {
            let time = k as f64 * dt;
            let t = time.min(total);
            let mut start = 0.0;
            let mut chosen = segments.len() - 1;
            for (i, s) in segments.iter().enumerate() {
                if t < start + s.duration {
                    chosen = i;
                    break;
                }
                start += s.duration;
            }
            if chosen == segments.len() - 1 {
                start = total - segments[chosen].duration;
            }
            let seg = &segments[chosen];
            let (position, rotation) = seg.pose_at(t - start);
            PoseSample {
                time,
                position,
                rotation,
                phase: seg.phase,
            }
        })
        .collect();
    PoseTrajectory {
        dt,
        samples,
        wipe_interval,
    }
}
