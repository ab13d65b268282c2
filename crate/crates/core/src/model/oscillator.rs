use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

use crate::{Result, SmolError};

/// Envelope law of the ring-down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DampingLaw {
    /// `D(t) = 1 - ηt`, clamped at zero.
    #[default]
    Linear,
    /// `D(t) = exp(-ηt)`.
    Exponential,
}

/// Motion law of the magnet-bearing cantilever.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscillatorParams {
    /// Resonance frequency (Hz).
    pub f_res: f64,
    /// Maximum deflection angle (rad).
    pub theta_max: f64,
    /// Damping coefficient (1/s).
    pub eta: f64,
    /// Phase (rad).
    pub phi: f64,
    /// Rotation-centre-to-magnet distance (m).
    pub l0: f64,
    pub damping: DampingLaw,
}

impl Default for OscillatorParams {
    /// The characterized tracker: 103.5 Hz, 17.8°, η = 1.1 s⁻¹ (linear), l0 = 1.5 mm.
    fn default() -> Self {
        Self {
            f_res: 103.5,
            theta_max: 17.8f64.to_radians(),
            eta: 1.1,
            phi: 0.0,
            l0: 1.5e-3,
            damping: DampingLaw::Linear,
        }
    }
}

impl OscillatorParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(SmolError::InvalidParameter {
                name,
                reason: reason.to_string(),
            })
        };
        if !(self.f_res > 0.0) {
            return bad("f_res", "must be positive");
        }
        if !(self.theta_max > 0.0 && self.theta_max < FRAC_PI_2) {
            return bad("theta_max", "must lie in (0, π/2)");
        }
        if !(self.eta >= 0.0) {
            return bad("eta", "must be non-negative");
        }
        if !(self.l0 > 0.0) {
            return bad("l0", "must be positive");
        }
        if !self.phi.is_finite() {
            return bad("phi", "must be finite");
        }
        Ok(())
    }

    /// Damping term `D(t)`, always within `[0, 1]`.
    #[inline]
    pub fn envelope(&self, t: f64) -> f64 {
        let d = match self.damping {
            DampingLaw::Linear => 1.0 - self.eta * t,
            DampingLaw::Exponential => (-self.eta * t).exp(),
        };
        d.clamp(0.0, 1.0)
    }

    pub fn angular_frequency(&self) -> f64 {
        2.0 * PI * self.f_res
    }

    pub fn half_period(&self) -> f64 {
        0.5 / self.f_res
    }
}

/// Cantilever deflection `θ(t) = θ_max · cos(2π f_res t + φ) · D(t)`.
#[inline]
pub fn deflection_angle(t: f64, p: &OscillatorParams) -> f64 {
    p.theta_max * (p.angular_frequency() * t + p.phi).cos() * p.envelope(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn starts_at_theta_max() {
        for damping in [DampingLaw::Linear, DampingLaw::Exponential] {
            let p = OscillatorParams {
                damping,
                ..Default::default()
            };
            assert_eq!(deflection_angle(0.0, &p), p.theta_max);
        }
    }

    #[test]
    fn exponential_e_folding() {
        // choose η so that t = 1/η is a whole number of periods
        let p = OscillatorParams {
            f_res: 100.0,
            eta: 4.0,
            damping: DampingLaw::Exponential,
            ..Default::default()
        };
        let t = 1.0 / p.eta;
        assert_relative_eq!(
            deflection_angle(t, &p),
            p.theta_max * (-1.0f64).exp(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn linear_example_value() {
        let p = OscillatorParams::default();
        // 17.8° · cos(20.7π) · 0.89
        let expected = 17.8 * (20.7 * PI).cos() * 0.89;
        assert_relative_eq!(
            deflection_angle(0.1, &p).to_degrees(),
            expected,
            max_relative = 1e-12
        );
        assert!((expected - (-9.31)).abs() < 0.01);
    }

    #[test]
    fn linear_envelope_clamped() {
        let p = OscillatorParams::default();
        assert_eq!(p.envelope(5.0), 0.0);
        assert_eq!(p.envelope(-1.0), 1.0);
        assert_eq!(deflection_angle(5.0, &p), 0.0);
    }

    #[test]
    fn validation() {
        assert!(OscillatorParams::default().validate().is_ok());
        let p = OscillatorParams {
            theta_max: 2.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = OscillatorParams {
            f_res: 0.0,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = OscillatorParams {
            eta: -0.1,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }
}
