//! Magneto-oscillatory localization core.
//!
//! A millimetre-scale magnet rides on a resonant cantilever. After a short
//! excitation burst the cantilever rings down, and the moving dipole produces a
//! time-varying field at a planar array of single-axis magnetometers. Because
//! the moment swings about an axis perpendicular to itself, the rotational
//! symmetry of a static dipole is broken and all six degrees of freedom of the
//! tracker can be recovered by fitting the physical model to the filtered
//! sensor signals.
//!
//! The crate is split into:
//!
//! - [`model`]: forward physics (oscillator, dipole field, kinematics, signal synthesis)
//! - [`signal`]: noise injection, the filter chain, spectra and half-period sampling
//! - [`solver`]: Levenberg-Marquardt, 6-DoF localization, calibration, superfast
//!   segmentation and the 5-DoF static-dipole baseline
//! - [`metrics`]: fit quality, accuracy and circular statistics

pub mod error;
pub mod metrics;
pub mod model;
pub mod signal;
pub mod solver;

pub use error::{Result, SmolError};

/// Vacuum permeability (T·m/A), classical value so that `MU0 / 4π = 1e-7` exactly.
pub const MU0: f64 = 4.0 * std::f64::consts::PI * 1e-7;

/// `MU0 / 4π`.
pub const MU0_OVER_4PI: f64 = 1e-7;
