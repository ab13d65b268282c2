use serde::{Deserialize, Serialize};

use crate::{Result, SmolError, MU0};

/// Permanent magnet described by remanence and volume.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnetSpec {
    /// Remanence `B_r` (T).
    pub remanence: f64,
    /// Magnetic volume (m³).
    pub volume: f64,
}

impl Default for MagnetSpec {
    /// Ø1 mm × 1 mm N52 cylinder, about 0.89 mA·m².
    fn default() -> Self {
        Self {
            remanence: 1.424,
            volume: std::f64::consts::FRAC_PI_4 * 1e-9,
        }
    }
}

impl MagnetSpec {
    pub fn new(remanence: f64, volume: f64) -> Result<Self> {
        let m = Self { remanence, volume };
        m.validate()?;
        Ok(m)
    }

    /// Cube of side `a` (m) with the default remanence.
    pub fn cube(a: f64) -> Self {
        Self {
            remanence: Self::default().remanence,
            volume: a * a * a,
        }
    }

    /// Magnet of the default remanence with the given moment (A·m²).
    pub fn with_moment(moment: f64) -> Self {
        let br = Self::default().remanence;
        Self {
            remanence: br,
            volume: moment * MU0 / br,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.remanence > 0.0) {
            return Err(SmolError::InvalidParameter {
                name: "remanence",
                reason: "must be positive".into(),
            });
        }
        if !(self.volume > 0.0) {
            return Err(SmolError::InvalidParameter {
                name: "volume",
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }

    /// Moment magnitude `B_r V / μ0` (A·m²).
    pub fn moment(&self) -> f64 {
        self.remanence * self.volume / MU0
    }

    /// Side of a cube with the same volume (m).
    pub fn equivalent_cube_side(&self) -> f64 {
        self.volume.cbrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_moment_is_about_089_milli() {
        let m = MagnetSpec::default().moment();
        assert!((m - 0.89e-3).abs() < 0.005e-3, "{m}");
    }

    #[test]
    fn moment_matches_definition() {
        let m = MagnetSpec::new(1.3, 2e-9).unwrap();
        let expected = 1.3 * 2e-9 / MU0;
        assert!(((m.moment() - expected) / expected).abs() < 1e-12);
        let back = MagnetSpec::with_moment(15.97e-3);
        assert!(((back.moment() - 15.97e-3) / 15.97e-3).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive() {
        assert!(MagnetSpec::new(0.0, 1e-9).is_err());
        assert!(MagnetSpec::new(1.0, -1e-9).is_err());
    }
}
