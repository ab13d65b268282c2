use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::rotation::Quat;

/// Position (m, world frame) and orientation (device-intrinsic to world) of the tracker.
///
/// The sensor plane is `z = 0` with `+z` pointing toward the device. In the
/// intrinsic frame the magnet's rest moment points along `+x`, the cantilever
/// along `+z`, and the magnet oscillates in the intrinsic x–z plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: Quat,
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: Quat) -> Self {
        Self {
            position,
            orientation,
        }
    }

    /// Device lying flat above the array centre: cantilever along `+y`, rest
    /// moment along `+x`, oscillation in a plane parallel to the sensors.
    pub fn reference(z: f64) -> Self {
        Self::new(Vector3::new(0.0, 0.0, z), Self::flat_orientation())
    }

    pub fn flat_orientation() -> Quat {
        Quat::from_axis_angle(&Vector3::x(), -std::f64::consts::FRAC_PI_2)
    }

    pub fn from_mm(x: f64, y: f64, z: f64, orientation: Quat) -> Self {
        Self::new(Vector3::new(x, y, z) * 1e-3, orientation)
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.orientation.to_matrix_normalized()
    }

    /// Rotate the whole pose about the world origin.
    pub fn rotated_by(&self, q: &Quat) -> Pose {
        let r = q.to_matrix_normalized();
        Pose::new(r * self.position, q.mul(&self.orientation).normalized())
    }

    /// Apply an extra rotation in the device's own frame.
    pub fn with_intrinsic_rotation(&self, q: &Quat) -> Pose {
        Pose::new(self.position, self.orientation.mul(q).normalized())
    }

    pub fn translated(&self, d: &Vector3<f64>) -> Pose {
        Pose::new(self.position + d, self.orientation)
    }

    pub fn is_unit(&self, tol: f64) -> bool {
        (self.orientation.norm() - 1.0).abs() <= tol
    }
}
