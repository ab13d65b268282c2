use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Result, SmolError};

/// Quaternion stored scalar-first: `q0 + q1 i + q2 j + q3 k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quat(pub [f64; 4]);

impl Quat {
    pub const IDENTITY: Quat = Quat([1.0, 0.0, 0.0, 0.0]);

    pub fn new(q0: f64, q1: f64, q2: f64, q3: f64) -> Self {
        Quat([q0, q1, q2, q3])
    }

    /// Rotation by `angle` (rad) about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::IDENTITY;
        }
        let a = axis / n;
        let (s, c) = (0.5 * angle).sin_cos();
        Quat([c, s * a.x, s * a.y, s * a.z])
    }

    /// Rotation vector (axis · angle) to quaternion.
    pub fn from_rotation_vector(v: &Vector3<f64>) -> Self {
        let angle = v.norm();
        if angle < 1e-300 {
            return Self::IDENTITY;
        }
        Self::from_axis_angle(v, angle)
    }

    pub fn scalar(&self) -> f64 {
        self.0[0]
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.0[1], self.0[2], self.0[3])
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        Quat(self.0.map(|v| v / n))
    }

    pub fn conjugate(&self) -> Self {
        let [a, b, c, d] = self.0;
        Quat([a, -b, -c, -d])
    }

    /// Hamilton product `self ⊗ rhs` (apply `rhs` first, then `self`).
    pub fn mul(&self, rhs: &Quat) -> Quat {
        let [a1, b1, c1, d1] = self.0;
        let [a2, b2, c2, d2] = rhs.0;
        Quat([
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ])
    }

    pub fn neg(&self) -> Quat {
        Quat(self.0.map(|v| -v))
    }

    /// Rotation angle (rad, in `[0, π]`) of the relative rotation to `other`.
    pub fn angle_to(&self, other: &Quat) -> f64 {
        let a = self.normalized();
        let b = other.normalized();
        let dot: f64 = a.0.iter().zip(b.0.iter()).map(|(x, y)| x * y).sum();
        2.0 * dot.abs().min(1.0).acos()
    }

    /// Signed rotation angle about `axis` contained in this quaternion
    /// (swing-twist decomposition), wrapped to `(-π, π]`.
    pub fn twist_angle(&self, axis: &Vector3<f64>) -> f64 {
        let a = axis.normalize();
        let proj = self.vector().dot(&a);
        let ang = 2.0 * proj.atan2(self.scalar());
        crate::metrics::wrap_angle(ang)
    }

    /// Rotation matrix of the normalized quaternion, without any norm check.
    pub fn to_matrix_normalized(&self) -> Matrix3<f64> {
        let q = self.normalized();
        matrix_from_unit(&q)
    }
}

impl Default for Quat {
    fn default() -> Self {
        Self::IDENTITY
    }
}

fn matrix_from_unit(q: &Quat) -> Matrix3<f64> {
    let [q0, q1, q2, q3] = q.0;
    2.0 * Matrix3::new(
        0.5 - q2 * q2 - q3 * q3,
        q1 * q2 - q3 * q0,
        q1 * q3 + q2 * q0,
        q1 * q2 + q3 * q0,
        0.5 - q1 * q1 - q3 * q3,
        q2 * q3 - q1 * q0,
        q1 * q3 - q2 * q0,
        q2 * q3 + q1 * q0,
        0.5 - q1 * q1 - q2 * q2,
    )
}

/// Rotation matrix of a unit quaternion.
///
/// Quaternions within `1e-3` of unit norm are renormalized; anything further
/// off is rejected.
pub fn quat_rotation_matrix(q: &Quat) -> Result<Matrix3<f64>> {
    let n = q.norm();
    if !n.is_finite() || (n - 1.0).abs() > 1e-3 {
        return Err(SmolError::InvalidQuaternion {
            norm: n,
            tolerance: 1e-3,
        });
    }
    Ok(matrix_from_unit(&q.normalized()))
}

/// Right-handed rotation about the y axis.
pub fn rot_y(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;
    use proptest::prelude::*;

    #[test]
    fn identity_quaternion_gives_identity_matrix() {
        let r = quat_rotation_matrix(&Quat::IDENTITY).unwrap();
        assert_eq!(r, Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_z_maps_x_to_y() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = quat_rotation_matrix(&Quat::new(h, 0.0, 0.0, h)).unwrap();
        let v = r * Vector3::x();
        assert_relative_eq!(v, Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn off_norm_quaternion_rejected() {
        let err = quat_rotation_matrix(&Quat::new(1.01, 0.0, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, SmolError::InvalidQuaternion { .. }));
        // small deviations are renormalized
        let r = quat_rotation_matrix(&Quat::new(1.0 + 5e-4, 0.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(r, Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn rot_y_cases() {
        assert_eq!(rot_y(0.0), Matrix3::identity());
        let v = rot_y(std::f64::consts::FRAC_PI_2) * Vector3::z();
        assert_relative_eq!(v, Vector3::x(), epsilon = 1e-15);
        let t = 0.7;
        assert_relative_eq!(rot_y(t) * rot_y(-t), Matrix3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn rotation_group_property_on_random_quaternions() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let q = Quat::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .normalized();
            let r = quat_rotation_matrix(&q).unwrap();
            assert!((r * r.transpose() - Matrix3::identity()).abs().max() < 1e-9);
            assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn matches_independent_quaternion_implementation(
            w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0
        ) {
            prop_assume!(w * w + x * x + y * y + z * z > 1e-3);
            let q = Quat::new(w, x, y, z).normalized();
            let ours = quat_rotation_matrix(&q).unwrap();
            let theirs = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(w, x, y, z))
                .to_rotation_matrix()
                .into_inner();
            prop_assert!((ours - theirs).abs().max() < 1e-12);
        }

        #[test]
        fn hamilton_product_composes_rotations(
            a in proptest::array::uniform3(-3.0f64..3.0),
            b in proptest::array::uniform3(-3.0f64..3.0),
        ) {
            let qa = Quat::from_rotation_vector(&Vector3::from(a));
            let qb = Quat::from_rotation_vector(&Vector3::from(b));
            let lhs = quat_rotation_matrix(&qa.mul(&qb).normalized()).unwrap();
            let rhs = quat_rotation_matrix(&qa).unwrap() * quat_rotation_matrix(&qb).unwrap();
            prop_assert!((lhs - rhs).abs().max() < 1e-12);
        }
    }

    #[test]
    fn twist_angle_recovers_axis_rotation() {
        let axis = Vector3::new(0.0, 1.0, 0.0);
        for deg in [-170.0f64, -20.0, 0.0, 35.0, 179.0] {
            let q = Quat::from_axis_angle(&axis, deg.to_radians());
            assert_relative_eq!(q.twist_angle(&axis), deg.to_radians(), epsilon = 1e-12);
            assert_relative_eq!(
                q.neg().twist_angle(&axis),
                deg.to_radians(),
                epsilon = 1e-12
            );
        }
    }
}
