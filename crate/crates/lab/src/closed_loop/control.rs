//! Gradient-pull control law: direction, drive current, coil pair split and actuation time.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::coils::COILS;
use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlConfig {
    pub i_min_a: f64,
    pub i_max_a: f64,
    /// Distance below which the current ramps down (mm).
    pub p_thr_mm: f64,
    pub t_min_s: f64,
    pub t_max_s: f64,
    pub arrival_mm: f64,
    /// Turns sharper than this get a longer actuation (deg).
    pub sharp_turn_deg: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            i_min_a: 6.0,
            i_max_a: 8.0,
            p_thr_mm: 3.0,
            t_min_s: 0.030,
            t_max_s: 0.080,
            arrival_mm: 0.8,
            sharp_turn_deg: 30.0,
        }
    }
}

impl ControlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.i_min_a >= 0.0 && self.i_min_a < self.i_max_a) {
            return Err(LabError::field(
                "control.i_min_a",
                "needs 0 <= i_min_a < i_max_a",
            ));
        }
        if !(self.t_min_s > 0.0 && self.t_min_s <= self.t_max_s) {
            return Err(LabError::field(
                "control.t_min_s",
                "needs 0 < t_min_s <= t_max_s",
            ));
        }
        if !(self.p_thr_mm > 0.0 && self.arrival_mm > 0.0 && self.sharp_turn_deg > 0.0) {
            return Err(LabError::field(
                "control.p_thr_mm",
                "thresholds must be positive",
            ));
        }
        Ok(())
    }
}

/// Planar scalar cross product.
pub fn cross2(a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Unit direction from `p` to `goal`; `None` when they coincide.
pub fn desired_direction(p: &Vector2<f64>, goal: &Vector2<f64>) -> Option<Vector2<f64>> {
    let d = goal - p;
    let n = d.norm();
    (n > 0.0 && n.is_finite()).then(|| d / n)
}

/// Drive current for the remaining distance (m), ramping from I_min at the goal to I_max at p_thr.
pub fn drive_current(distance: f64, cfg: &ControlConfig) -> f64 {
    let r = (distance.max(0.0) / (cfg.p_thr_mm * 1e-3)).min(1.0);
    cfg.i_min_a + (cfg.i_max_a - cfg.i_min_a) * r
}

/// Share λ of coil j in the combination λ·B_j + (1 − λ)·B_k parallel to D.
/// `None` when the pair cannot produce D (parallel fields, or a negative share).
pub fn coil_pair_ratio(bj: &Vector2<f64>, bk: &Vector2<f64>, d: &Vector2<f64>) -> Option<f64> {
    let (cj, ck) = (cross2(bj, d), cross2(bk, d));
    let scale = bj.norm().max(bk.norm());
    let denom = cj - ck;
    if !(scale > 0.0) || denom.abs() <= 1e-9 * scale {
        return None;
    }
    let lambda = -ck / denom;
    if !(-1e-12..=1.0 + 1e-12).contains(&lambda) {
        return None;
    }
    let lambda = lambda.clamp(0.0, 1.0);
    ((bj * lambda + bk * (1.0 - lambda)).dot(d) > 0.0).then_some(lambda)
}

/// Currents of coils j and k for share λ: the coil with the larger share runs at
/// `i_drive`, the other at the ratio of the shares.
pub fn pair_currents(lambda: f64, i_drive: f64) -> (f64, f64) {
    if lambda >= 0.5 {
        (i_drive, i_drive * (1.0 - lambda) / lambda)
    } else {
        (i_drive * lambda / (1.0 - lambda), i_drive)
    }
}

/// Coil currents producing an in-plane field along `d` from the per-ampere coil fields.
/// A single coil already aligned with `d` runs alone; otherwise the feasible pair with
/// the strongest field along `d` is chosen.
pub fn coil_currents(
    fields: &[Vector2<f64>; COILS],
    d: &Vector2<f64>,
    i_drive: f64,
) -> Result<[f64; COILS]> {
    let mut best: Option<([f64; COILS], f64)> = None;
    let mut consider = |c: [f64; COILS]| {
        let b: Vector2<f64> = (0..COILS).map(|j| fields[j] * c[j]).sum();
        let along = b.dot(d);
        if along > 0.0 && best.as_ref().is_none_or(|(_, s)| along > *s) {
            best = Some((c, along));
        }
    };
    for j in 0..COILS {
        let n = fields[j].norm();
        if n > 0.0 && cross2(&fields[j], d).abs() <= 1e-12 * n && fields[j].dot(d) > 0.0 {
            let mut c = [0.0; COILS];
            c[j] = i_drive;
            consider(c);
        }
    }
    for j in 0..COILS {
        for k in j + 1..COILS {
            if let Some(l) = coil_pair_ratio(&fields[j], &fields[k], d) {
                let (ij, ik) = pair_currents(l, i_drive);
                let mut c = [0.0; COILS];
                c[j] = ij;
                c[k] = ik;
                consider(c);
            }
        }
    }
    best.map(|(c, _)| c).ok_or_else(|| {
        LabError::Campaign(format!(
            "no coil combination pulls along ({:.3}, {:.3})",
            d.x, d.y
        ))
    })
}

/// Actuation time for a heading change of `alpha_deg`.
pub fn actuation_time(alpha_deg: f64, cfg: &ControlConfig) -> f64 {
    let a = alpha_deg.abs().min(180.0);
    if a <= cfg.sharp_turn_deg {
        cfg.t_min_s
    } else {
        cfg.t_min_s + (cfg.t_max_s - cfg.t_min_s) * a / 180.0
    }
}

/// Unsigned angle between two planar directions (deg).
pub fn heading_change_deg(u: &Vector2<f64>, d: &Vector2<f64>) -> f64 {
    cross2(u, d).atan2(u.dot(d)).to_degrees().abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn direction_examples() {
        let d = desired_direction(&Vector2::zeros(), &Vector2::new(3e-3, 0.0)).unwrap();
        assert_eq!(d, Vector2::new(1.0, 0.0));
        let d = desired_direction(&Vector2::new(1e-3, 1e-3), &Vector2::new(2e-3, 2e-3)).unwrap();
        assert_relative_eq!(d.x, 0.5f64.sqrt(), max_relative = 1e-12);
        assert_relative_eq!(d.y, 0.5f64.sqrt(), max_relative = 1e-12);
        assert!(desired_direction(&Vector2::new(1.0, 2.0), &Vector2::new(1.0, 2.0)).is_none());
    }

    #[test]
    fn current_examples() {
        let c = ControlConfig::default();
        assert_eq!(drive_current(0.0, &c), 6.0);
        assert_relative_eq!(drive_current(3e-3, &c), 8.0, max_relative = 1e-12);
        assert_eq!(drive_current(10e-3, &c), 8.0);
        assert_relative_eq!(drive_current(1.5e-3, &c), 7.0, max_relative = 1e-12);
    }

    #[test]
    fn time_examples() {
        let c = ControlConfig::default();
        assert_eq!(actuation_time(10.0, &c), 0.030);
        assert_eq!(actuation_time(30.0, &c), 0.030);
        assert_relative_eq!(actuation_time(180.0, &c), 0.080, max_relative = 1e-12);
        assert_relative_eq!(
            actuation_time(105.0, &c),
            0.030 + 0.050 * 105.0 / 180.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(actuation_time(-105.0, &c), actuation_time(105.0, &c));
    }

    #[test]
    fn pair_examples() {
        let bj = Vector2::new(1.0, 0.0);
        let bk = Vector2::new(0.0, 1.0);
        // diagonal: equal shares, equal currents
        let d = Vector2::new(1.0, 1.0).normalize();
        let l = coil_pair_ratio(&bj, &bk, &d).unwrap();
        assert_relative_eq!(l, 0.5, max_relative = 1e-12);
        assert_eq!(pair_currents(l, 7.0), (7.0, 7.0));
        // D along B_j: coil j alone
        assert_relative_eq!(coil_pair_ratio(&bj, &bk, &bj).unwrap(), 1.0);
        assert_eq!(pair_currents(1.0, 7.0), (7.0, 0.0));
        // λ = 0.25: coil j carries a third of coil k's current
        let d = (bj * 0.25 + bk * 0.75).normalize();
        let l = coil_pair_ratio(&bj, &bk, &d).unwrap();
        assert_relative_eq!(l, 0.25, max_relative = 1e-12);
        let (ij, ik) = pair_currents(l, 6.0);
        assert_relative_eq!(ij, 2.0, max_relative = 1e-12);
        assert_eq!(ik, 6.0);
        // pointing away from both coils
        assert!(coil_pair_ratio(&bj, &bk, &Vector2::new(-1.0, -1.0).normalize()).is_none());
        // antiparallel fields cannot make a transverse direction
        assert!(coil_pair_ratio(&bj, &(-bj), &bk).is_none());
    }

    fn ring() -> [Vector2<f64>; COILS] {
        [
            Vector2::new(1.0, 0.1),
            Vector2::new(-0.05, 0.9),
            Vector2::new(-1.1, 0.0),
            Vector2::new(0.02, -1.0),
        ]
    }

    proptest! {
        #[test]
        fn composed_field_is_parallel_and_within_limits(angle in 0.0..std::f64::consts::TAU, i in 6.0..8.0f64) {
            let d = Vector2::new(angle.cos(), angle.sin());
            let f = ring();
            let c = coil_currents(&f, &d, i).unwrap();
            prop_assert!(c.iter().all(|&x| (0.0..=i + 1e-12).contains(&x)));
            prop_assert!(c.iter().filter(|&&x| x > 0.0).count() <= 2);
            let b: Vector2<f64> = (0..COILS).map(|j| f[j] * c[j]).sum();
            prop_assert!(heading_change_deg(&b.normalize(), &d) < 1e-6);
        }

        #[test]
        fn swapping_the_pair_gives_the_same_currents(l in 0.001..0.999f64, i in 6.0..8.0f64) {
            let (a, b) = pair_currents(l, i);
            let (b2, a2) = pair_currents(1.0 - l, i);
            prop_assert!((a - a2).abs() < 1e-12 && (b - b2).abs() < 1e-12);
        }

        #[test]
        fn direction_is_unit(x in -1.0..1.0f64, y in -1.0..1.0f64, gx in -1.0..1.0f64, gy in -1.0..1.0f64) {
            if let Some(d) = desired_direction(&Vector2::new(x, y), &Vector2::new(gx, gy)) {
                prop_assert!((d.norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}
