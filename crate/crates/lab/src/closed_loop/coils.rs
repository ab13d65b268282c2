//! Planar actuation coils: analytic loop fields tabulated on a regular grid.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use smol_core::MU0;

use crate::error::{LabError, Result};

/// Complete elliptic integrals K(m) and E(m) of parameter m = k², by the arithmetic-geometric mean.
pub fn elliptic_ke(m: f64) -> (f64, f64) {
    debug_assert!((0.0..1.0).contains(&m));
    let (mut a, mut b) = (1.0, (1.0 - m).sqrt());
    let mut c2_sum = 0.5 * m;
    let mut pow = 0.5;
    for _ in 0..64 {
        let c = 0.5 * (a - b);
        let (an, bn) = (0.5 * (a + b), (a * b).sqrt());
        pow *= 2.0;
        c2_sum += pow * c * c;
        a = an;
        b = bn;
        if c.abs() <= f64::EPSILON * a {
            break;
        }
    }
    let k = std::f64::consts::FRAC_PI_2 / a;
    (k, k * (1.0 - c2_sum))
}

/// Field (T) of a circular loop of `radius` carrying `amp_turns`, centred at the origin with axis +z.
pub fn loop_field_local(radius: f64, amp_turns: f64, p: &Vector3<f64>) -> Vector3<f64> {
    let rho = p.x.hypot(p.y);
    let z = p.z;
    let a = radius;
    let alpha2 = (a - rho).powi(2) + z * z;
    let beta2 = (a + rho).powi(2) + z * z;
    let beta = beta2.sqrt();
    let m = 4.0 * a * rho / beta2;
    let (k, e) = elliptic_ke(m.min(1.0 - 1e-16));
    let c = MU0 * amp_turns / (2.0 * std::f64::consts::PI);
    let bz = c / beta * (k + (a * a - rho * rho - z * z) / alpha2 * e);
    if rho < 1e-12 * a {
        return Vector3::new(0.0, 0.0, bz);
    }
    let brho = c * z / (rho * beta) * (-k + (a * a + rho * rho + z * z) / alpha2 * e);
    Vector3::new(brho * p.x / rho, brho * p.y / rho, bz)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoilParams {
    /// Centre of the coil square (mm, world frame).
    pub center_mm: [f64; 3],
    /// Distance between opposing coils (mm).
    pub opposing_distance_mm: f64,
    pub loop_radius_mm: f64,
    pub turns: f64,
    /// Half extent of the tabulated region around the centre (mm): x/y, then z.
    pub grid_half_extent_mm: [f64; 2],
    pub grid_pitch_mm: f64,
}

impl Default for CoilParams {
    fn default() -> Self {
        Self {
            center_mm: [0.0, 0.0, 80.0],
            opposing_distance_mm: 84.0,
            loop_radius_mm: 15.0,
            turns: 200.0,
            grid_half_extent_mm: [36.0, 2.0],
            grid_pitch_mm: 0.5,
        }
    }
}

impl CoilParams {
    pub fn validate(&self) -> Result<()> {
        let g = self.grid_half_extent_mm;
        if !(self.loop_radius_mm > 0.0
            && self.turns > 0.0
            && self.grid_pitch_mm > 0.0
            && g[0] > 0.0
            && g[1] >= 0.0)
        {
            return Err(LabError::field(
                "coils",
                "radius, turns, pitch and grid extent must be positive",
            ));
        }
        if g[0] + self.grid_pitch_mm >= self.opposing_distance_mm / 2.0 - 1.0 {
            return Err(LabError::field(
                "coils.grid_half_extent_mm",
                "grid reaches into the coils",
            ));
        }
        Ok(())
    }
}

/// Four coils on the sides of a square, axes pointing away from the centre, so a
/// positive current pulls a field-aligned magnet toward that coil.
/// Order: +x, +y, −x, −y.
#[derive(Debug, Clone)]
pub struct CoilModel {
    pub params: CoilParams,
    center: Vector3<f64>,
    pitch: f64,
    origin: Vector3<f64>,
    dims: [usize; 3],
    /// Field per ampere, `[coil][((iz * ny) + iy) * nx + ix]`.
    table: Vec<Vec<Vector3<f64>>>,
}

pub const COILS: usize = 4;

impl CoilModel {
    pub fn new(params: CoilParams) -> Result<Self> {
        params.validate()?;
        let center = Vector3::from(params.center_mm) * 1e-3;
        let pitch = params.grid_pitch_mm * 1e-3;
        let [hxy, hz] = params.grid_half_extent_mm.map(|v| v * 1e-3);
        let nxy = (2.0 * hxy / pitch).round() as usize + 1;
        let nz = (2.0 * hz / pitch).round() as usize + 1;
        let origin = center - Vector3::new(hxy, hxy, hz);
        let mut model = Self {
            params,
            center,
            pitch,
            origin,
            dims: [nxy, nxy, nz],
            table: Vec::new(),
        };
        let mut table: Vec<Vec<_>> = (0..COILS)
            .map(|_| Vec::with_capacity(nxy * nxy * nz))
            .collect();
        for iz in 0..nz {
            for iy in 0..nxy {
                for ix in 0..nxy {
                    let p = origin + Vector3::new(ix as f64, iy as f64, iz as f64) * pitch;
                    for (j, t) in table.iter_mut().enumerate() {
                        t.push(model.analytic(j, &p, 1.0));
                    }
                }
            }
        }
        model.table = table;
        Ok(model)
    }

    /// Outward axis of coil `j`.
    pub fn axis(j: usize) -> Vector3<f64> {
        let a = j as f64 * std::f64::consts::FRAC_PI_2;
        Vector3::new(a.cos().round(), a.sin().round(), 0.0)
    }

    pub fn coil_center(&self, j: usize) -> Vector3<f64> {
        self.center + Self::axis(j) * self.params.opposing_distance_mm * 0.5e-3
    }

    /// Direct evaluation of coil `j`'s field at `p` (world, m) for `current` amperes.
    pub fn analytic(&self, j: usize, p: &Vector3<f64>, current: f64) -> Vector3<f64> {
        let ax = Self::axis(j);
        // local frame: z along the coil axis, x = ax × z_world
        let ez = ax;
        let ex = Vector3::z();
        let ey = ez.cross(&ex);
        let d = p - self.coil_center(j);
        let local = Vector3::new(d.dot(&ex), d.dot(&ey), d.dot(&ez));
        let b = loop_field_local(
            self.params.loop_radius_mm * 1e-3,
            self.params.turns * current,
            &local,
        );
        ex * b.x + ey * b.y + ez * b.z
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        let u = (p - self.origin) / self.pitch;
        (0..3).all(|a| u[a] >= 0.0 && u[a] <= (self.dims[a] - 1) as f64)
    }

    /// Trilinear interpolation of coil `j`'s tabulated field at `p` for one ampere.
    pub fn field_per_amp(&self, j: usize, p: &Vector3<f64>) -> Result<Vector3<f64>> {
        if !self.contains(p) {
            return Err(LabError::Campaign(format!(
                "position ({:.2}, {:.2}, {:.2}) mm is outside the coil field map",
                p.x * 1e3,
                p.y * 1e3,
                p.z * 1e3
            )));
        }
        let u = (p - self.origin) / self.pitch;
        let mut i0 = [0usize; 3];
        let mut f = [0.0; 3];
        for a in 0..3 {
            let top = self.dims[a].saturating_sub(2);
            i0[a] = (u[a].floor() as usize).min(top);
            f[a] = if self.dims[a] > 1 {
                u[a] - i0[a] as f64
            } else {
                0.0
            };
        }
        let [nx, ny, _] = self.dims;
        let t = &self.table[j];
        let mut out = Vector3::zeros();
        for dz in 0..2usize {
            let wz = if dz == 0 { 1.0 - f[2] } else { f[2] };
            let iz = (i0[2] + dz).min(self.dims[2] - 1);
            for dy in 0..2usize {
                let wy = if dy == 0 { 1.0 - f[1] } else { f[1] };
                for dx in 0..2usize {
                    let wx = if dx == 0 { 1.0 - f[0] } else { f[0] };
                    let w = wx * wy * wz;
                    if w != 0.0 {
                        out += t[(iz * ny + i0[1] + dy) * nx + i0[0] + dx] * w;
                    }
                }
            }
        }
        Ok(out)
    }

    /// In-plane field per ampere of every coil at `p`.
    pub fn planar_fields(&self, p: &Vector3<f64>) -> Result<[Vector2<f64>; COILS]> {
        let mut out = [Vector2::zeros(); COILS];
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.field_per_amp(j, p)?.xy();
        }
        Ok(out)
    }

    /// Total field at `p` for the given coil currents.
    pub fn field(&self, currents: &[f64; COILS], p: &Vector3<f64>) -> Result<Vector3<f64>> {
        let mut b = Vector3::zeros();
        for (j, &i) in currents.iter().enumerate() {
            if i != 0.0 {
                b += self.field_per_amp(j, p)? * i;
            }
        }
        Ok(b)
    }

    /// Gradient of |B| at `p` by central differences over one grid pitch.
    pub fn grad_magnitude(
        &self,
        currents: &[f64; COILS],
        p: &Vector3<f64>,
    ) -> Result<Vector3<f64>> {
        let mut g = Vector3::zeros();
        for a in 0..3 {
            if self.dims[a] < 2 {
                continue;
            }
            let mut e = Vector3::zeros();
            e[a] = 0.5 * self.pitch;
            let hi = if self.contains(&(p + e)) { p + e } else { *p };
            let lo = if self.contains(&(p - e)) { p - e } else { *p };
            let span = (hi - lo)[a];
            if span > 0.0 {
                g[a] =
                    (self.field(currents, &hi)?.norm() - self.field(currents, &lo)?.norm()) / span;
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn elliptic_reference_values() {
        let (k, e) = elliptic_ke(0.0);
        assert_relative_eq!(k, std::f64::consts::FRAC_PI_2, max_relative = 1e-15);
        assert_relative_eq!(e, std::f64::consts::FRAC_PI_2, max_relative = 1e-15);
        // m = 1/2
        let (k, e) = elliptic_ke(0.5);
        assert_relative_eq!(k, 1.854_074_677_301_372, max_relative = 1e-14);
        assert_relative_eq!(e, 1.350_643_881_047_675_5, max_relative = 1e-14);
        // m = 0.9
        let (k, e) = elliptic_ke(0.9);
        assert_relative_eq!(k, 2.578_092_113_348_173, max_relative = 1e-13);
        assert_relative_eq!(e, 1.104_774_732_704_073, max_relative = 1e-13);
    }

    fn biot_savart(radius: f64, amp: f64, p: &Vector3<f64>, segments: usize) -> Vector3<f64> {
        let mut b = Vector3::zeros();
        let dphi = 2.0 * std::f64::consts::PI / segments as f64;
        for s in 0..segments {
            let phi = (s as f64 + 0.5) * dphi;
            let r = Vector3::new(radius * phi.cos(), radius * phi.sin(), 0.0);
            let dl = Vector3::new(-phi.sin(), phi.cos(), 0.0) * radius * dphi;
            let d = p - r;
            b += dl.cross(&d) / d.norm().powi(3);
        }
        b * MU0 * amp / (4.0 * std::f64::consts::PI)
    }

    #[test]
    fn loop_field_matches_on_axis_formula_and_biot_savart() {
        let (a, i) = (0.015, 1600.0);
        for z in [-0.03, 0.0, 0.01, 0.042] {
            let b = loop_field_local(a, i, &Vector3::new(0.0, 0.0, z));
            let on_axis = MU0 * i * a * a / (2.0 * (a * a + z * z).powf(1.5));
            assert_relative_eq!(b.z, on_axis, max_relative = 1e-12);
            assert_eq!(b.x, 0.0);
        }
        for p in [
            Vector3::new(0.01, 0.004, 0.02),
            Vector3::new(-0.03, 0.02, -0.01),
            Vector3::new(0.05, 0.0, 0.001),
        ] {
            let b = loop_field_local(a, i, &p);
            let r = biot_savart(a, i, &p, 20_000);
            assert!((b - r).norm() < 1e-8 * r.norm(), "{b:?} vs {r:?}");
        }
    }

    fn small() -> CoilModel {
        CoilModel::new(CoilParams {
            grid_half_extent_mm: [10.0, 1.0],
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn grid_nodes_reproduce_analytic_field() {
        let m = small();
        let p = Vector3::new(0.0035, -0.002, 0.0805);
        for j in 0..COILS {
            let t = m.field_per_amp(j, &p).unwrap();
            let a = m.analytic(j, &p, 1.0);
            assert!((t - a).norm() < 1e-12 * a.norm(), "{j} {t:?} {a:?}");
        }
        // between nodes the interpolation error stays small
        let q = Vector3::new(0.00312, -0.00171, 0.08033);
        let t = m.field_per_amp(0, &q).unwrap();
        let a = m.analytic(0, &q, 1.0);
        assert!((t - a).norm() < 1e-3 * a.norm());
        assert!(m.field_per_amp(0, &Vector3::new(0.02, 0.0, 0.08)).is_err());
    }

    #[test]
    fn opposing_coils_are_mirror_images() {
        let m = small();
        let c = Vector3::new(0.0, 0.0, 0.08);
        for d in [
            Vector3::new(0.004, 0.003, 0.0005),
            Vector3::new(-0.007, 0.001, -0.001),
        ] {
            let b0 = m.field_per_amp(0, &(c + d)).unwrap();
            let b2 = m
                .field_per_amp(2, &(c + Vector3::new(-d.x, d.y, d.z)))
                .unwrap();
            assert!((b0 - Vector3::new(-b2.x, b2.y, b2.z)).norm() < 1e-6 * b0.norm());
            // a quarter turn maps coil 0 onto coil 1
            let b1 = m
                .field_per_amp(1, &(c + Vector3::new(-d.y, d.x, d.z)))
                .unwrap();
            assert!((Vector3::new(-b0.y, b0.x, b0.z) - b1).norm() < 1e-6 * b0.norm());
        }
    }

    #[test]
    fn positive_current_points_toward_its_coil() {
        let m = small();
        let c = Vector3::new(0.0, 0.0, 0.08);
        for j in 0..COILS {
            let b = m.field_per_amp(j, &c).unwrap();
            assert!(b.normalize().dot(&CoilModel::axis(j)) > 0.999);
        }
    }
}
