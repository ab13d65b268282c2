//! Overdamped planar robot carrying the oscillating magnet.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use smol_core::model::{Pose, Quat};

use crate::error::{LabError, Result};

/// How the applied field turns into a pulling force.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForceModel {
    /// Force along B with magnitude proportional to |B|.
    Proxy { newton_per_tesla: f64 },
    /// Force on a field-aligned moment, m·∇|B|.
    Gradient,
}

impl Default for ForceModel {
    fn default() -> Self {
        // matches m·∇|B| near the centre of the default coil square
        ForceModel::Proxy {
            newton_per_tesla: 0.064,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotParams {
    /// Velocity per unit force (m/s per N).
    pub mobility: f64,
    /// Heading relaxation time toward the applied field (s).
    pub heading_tau_s: f64,
    pub force: ForceModel,
    /// Integration step (s).
    pub dt_s: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        // a ~2 mm body in glycerol, Stokes drag 1/(6πηr)
        Self {
            mobility: 40.0,
            heading_tau_s: 0.020,
            force: ForceModel::default(),
            dt_s: 1e-3,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mobility > 0.0 && self.heading_tau_s > 0.0 && self.dt_s > 0.0) {
            return Err(LabError::field(
                "robot",
                "mobility, heading_tau_s and dt_s must be positive",
            ));
        }
        if let ForceModel::Proxy { newton_per_tesla } = self.force {
            if !(newton_per_tesla >= 0.0) {
                return Err(LabError::field(
                    "robot.force.newton_per_tesla",
                    "must be non-negative",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    /// Position (m); z stays on the actuation plane.
    pub position: Vector3<f64>,
    /// Unit in-plane heading of the magnetic axis.
    pub heading: Vector2<f64>,
}

impl RobotState {
    pub fn new(position: Vector3<f64>, heading: Vector2<f64>) -> Self {
        Self {
            position,
            heading: heading.normalize(),
        }
    }

    /// Device pose: the rest moment lies along the heading, oscillating in the horizontal plane.
    pub fn pose(&self) -> Pose {
        let psi = self.heading.y.atan2(self.heading.x);
        let q = Quat::from_axis_angle(&Vector3::z(), psi).mul(&Pose::flat_orientation());
        Pose::new(self.position, q)
    }
}

/// In-plane heading of a device pose (its rest-moment axis projected on the plane).
pub fn pose_heading(pose: &Pose) -> Vector2<f64> {
    let m = pose.rotation_matrix().column(0).xy();
    if m.norm() > 0.0 {
        m.normalize()
    } else {
        Vector2::x()
    }
}

/// True when the oscillation-plane normal points down, as for a robot floating upright.
pub fn is_upright(pose: &Pose) -> bool {
    pose.rotation_matrix().column(1).z < 0.0
}

/// The pose turned over about its rest-moment axis with the magnet kept in place;
/// with the phase shifted by half a period it radiates nearly the same field.
pub fn flipped(pose: &Pose, l0: f64) -> Pose {
    let r = pose.rotation_matrix();
    let q = pose
        .orientation
        .mul(&Quat::from_axis_angle(&Vector3::x(), std::f64::consts::PI))
        .normalized();
    Pose::new(pose.position + r.column(2) * (2.0 * l0), q)
}

/// Advances the robot for `dt` under a constant field `b` and force `force`.
/// Translation is overdamped; the heading relaxes toward the field direction.
pub fn step_robot(
    state: &RobotState,
    b: &Vector3<f64>,
    force: &Vector3<f64>,
    dt: f64,
    p: &RobotParams,
) -> RobotState {
    let mut next = *state;
    let f = Vector3::new(force.x, force.y, 0.0);
    next.position += f * p.mobility * dt;
    let bp = b.xy();
    if bp.norm() > 0.0 {
        let target = bp.normalize();
        let cur = state.heading.y.atan2(state.heading.x);
        let mut delta = target.y.atan2(target.x) - cur;
        delta =
            (delta + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
        let a = cur + delta * (1.0 - (-dt / p.heading_tau_s).exp());
        next.heading = Vector2::new(a.cos(), a.sin());
    }
    next
}
