use nalgebra::Vector3;

use crate::{Result, SmolError, MU0_OVER_4PI};

/// Default minimum dipole-to-point distance (m) below which the field is singular.
pub const DEFAULT_MIN_DISTANCE: f64 = 1e-6;

/// Torque on a moment `m` (A·m²) in a uniform field `b_ext` (T).
pub fn magnetic_torque(m: &Vector3<f64>, b_ext: &Vector3<f64>) -> Vector3<f64> {
    m.cross(b_ext)
}

/// Ideal dipole field at offset `r` (m) from the dipole centre.
pub fn dipole_field(m: &Vector3<f64>, r: &Vector3<f64>) -> Result<Vector3<f64>> {
    dipole_field_with_limit(m, r, DEFAULT_MIN_DISTANCE)
}

pub fn dipole_field_with_limit(
    m: &Vector3<f64>,
    r: &Vector3<f64>,
    min_distance: f64,
) -> Result<Vector3<f64>> {
    let d = r.norm();
    if !(d >= min_distance) {
        return Err(SmolError::Singularity {
            distance: d,
            limit: min_distance,
        });
    }
    Ok(dipole_field_unchecked(m, r))
}

/// `μ0/(4π|r|³) (3 r̂ r̂ᵀ − I) m` without the distance check.
#[inline(always)]
pub(crate) fn dipole_field_unchecked(m: &Vector3<f64>, r: &Vector3<f64>) -> Vector3<f64> {
    let r2 = r.norm_squared();
    let inv_r = 1.0 / r2.sqrt();
    let inv_r3 = inv_r / r2;
    let rm = r.dot(m) / r2;
    (r * (3.0 * rm) - m) * (MU0_OVER_4PI * inv_r3)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn torque_examples() {
        let m = Vector3::new(8.9e-4, 0.0, 0.0);
        assert_eq!(magnetic_torque(&m, &(m * 3.0)), Vector3::zeros());
        let t = magnetic_torque(&m, &Vector3::new(0.0, 1e-3, 0.0));
        assert_relative_eq!(t, Vector3::new(0.0, 0.0, 8.9e-7), max_relative = 1e-12);
        // antisymmetry of the cross product
        let b = Vector3::new(0.3, -1.2, 0.4);
        assert_eq!(magnetic_torque(&m, &b), -magnetic_torque(&b, &m));
    }

    #[test]
    fn equatorial_and_axial_closed_forms() {
        let m = 8.9e-4;
        let z = 0.08;
        let equatorial =
            dipole_field(&Vector3::new(m, 0.0, 0.0), &Vector3::new(0.0, 0.0, z)).unwrap();
        let expected = -MU0_OVER_4PI * m / (z * z * z);
        assert_relative_eq!(
            equatorial,
            Vector3::new(expected, 0.0, 0.0),
            max_relative = 1e-12
        );
        assert!((expected - (-1.738e-7)).abs() < 1e-10);

        let axial = dipole_field(&Vector3::new(0.0, 0.0, m), &Vector3::new(0.0, 0.0, z)).unwrap();
        assert_relative_eq!(
            axial,
            Vector3::new(0.0, 0.0, -2.0 * expected),
            max_relative = 1e-12
        );
        assert!((axial.z - 3.477e-7).abs() < 1e-10);
    }

    #[test]
    fn singular_points_rejected() {
        let m = Vector3::new(1.0, 0.0, 0.0);
        assert!(matches!(
            dipole_field(&m, &Vector3::new(0.0, 0.0, 1e-7)),
            Err(SmolError::Singularity { .. })
        ));
        assert!(dipole_field_with_limit(&m, &Vector3::new(0.0, 0.0, 1e-7), 1e-8).is_ok());
    }

    proptest! {
        #[test]
        fn field_is_even_in_r(
            m in proptest::array::uniform3(-1e-3f64..1e-3),
            r in proptest::array::uniform3(-0.2f64..0.2),
        ) {
            let r = Vector3::from(r);
            prop_assume!(r.norm() > 1e-3);
            let m = Vector3::from(m);
            let a = dipole_field(&m, &r).unwrap();
            let b = dipole_field(&m, &-r).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn polar_form_agrees(
            mag in 1e-5f64..1e-2,
            dist in 0.01f64..0.3,
            angle in -3.1f64..3.1,
        ) {
            // moment along +x, field point in the x–z plane at polar angle `angle` from the moment axis
            let m = Vector3::new(mag, 0.0, 0.0);
            let r = Vector3::new(dist * angle.cos(), 0.0, dist * angle.sin());
            let b = dipole_field(&m, &r).unwrap();
            // radial and tangential components of the polar dipole form
            let k = MU0_OVER_4PI * mag / dist.powi(3);
            let radial = 2.0 * k * angle.cos();
            let tangential = k * angle.sin();
            let r_hat = r / dist;
            let t_hat = Vector3::new(-angle.sin(), 0.0, angle.cos());
            let expected = r_hat * radial + t_hat * tangential;
            prop_assert!((b - expected).norm() <= 1e-10 * expected.norm().max(k));
        }
    }
}
