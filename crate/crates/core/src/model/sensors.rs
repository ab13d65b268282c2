use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Result, SmolError};

/// Single-axis magnetometer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    /// Position (m).
    pub position: Vector3<f64>,
    /// Unit sensing axis.
    pub axis: Vector3<f64>,
    /// Symmetric measurement range ± (T).
    pub range: f64,
    /// Quantization step (T).
    pub quantization: f64,
}

impl SensorSpec {
    /// ±10 µT range, 0.1 nT resolution.
    pub fn fluxgate(position: Vector3<f64>, axis: Vector3<f64>) -> Self {
        Self {
            position,
            axis: axis.normalize(),
            range: 10e-6,
            quantization: 0.1e-9,
        }
    }
}

/// Planar sensor array with one reference sensor per measurement direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorArray {
    pub sensors: Vec<SensorSpec>,
    /// Sample rate (Hz).
    pub sample_rate: f64,
    /// Indices of the reference sensors, one per distinct axis.
    pub references: Vec<usize>,
}

const AXIS_TOL: f64 = 1e-6;

impl Default for SensorArray {
    /// 3×3 grid at 50 mm pitch sensing along z, plus a z-axis reference sensor
    /// at (−100, −100, 0) mm; 50 kS/s.
    fn default() -> Self {
        let mut sensors = Vec::with_capacity(10);
        for iy in -1..=1 {
            for ix in -1..=1 {
                let p = Vector3::new(ix as f64 * 0.05, iy as f64 * 0.05, 0.0);
                sensors.push(SensorSpec::fluxgate(p, Vector3::z()));
            }
        }
        sensors.push(SensorSpec::fluxgate(
            Vector3::new(-0.1, -0.1, 0.0),
            Vector3::z(),
        ));
        Self {
            sensors,
            sample_rate: 50_000.0,
            references: vec![9],
        }
    }
}

impl SensorArray {
    pub fn new(sensors: Vec<SensorSpec>, sample_rate: f64, references: Vec<usize>) -> Result<Self> {
        let a = Self {
            sensors,
            sample_rate,
            references,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) {
            return Err(SmolError::Configuration(
                "sample_rate must be positive".into(),
            ));
        }
        if self.sensors.is_empty() {
            return Err(SmolError::Configuration("array has no sensors".into()));
        }
        for (i, s) in self.sensors.iter().enumerate() {
            if (s.axis.norm() - 1.0).abs() > 1e-9 {
                return Err(SmolError::Configuration(format!(
                    "sensor {i} axis is not unit length"
                )));
            }
            if !(s.range > 0.0) || !(s.quantization >= 0.0) {
                return Err(SmolError::Configuration(format!(
                    "sensor {i} needs positive range and non-negative quantization"
                )));
            }
        }
        for &r in &self.references {
            if r >= self.sensors.len() {
                return Err(SmolError::Configuration(format!(
                    "reference index {r} out of range"
                )));
            }
        }
        // exactly one reference per represented direction
        for dir in self.directions() {
            let n = self
                .references
                .iter()
                .filter(|&&r| same_axis(&self.sensors[r].axis, &dir))
                .count();
            if n != 1 {
                return Err(SmolError::Configuration(format!(
                    "direction ({:.3}, {:.3}, {:.3}) has {n} reference sensors, expected 1",
                    dir.x, dir.y, dir.z
                )));
            }
        }
        Ok(())
    }

    /// Distinct measurement axes in first-seen order.
    pub fn directions(&self) -> Vec<Vector3<f64>> {
        let mut dirs: Vec<Vector3<f64>> = Vec::new();
        for s in &self.sensors {
            if !dirs.iter().any(|d| same_axis(d, &s.axis)) {
                dirs.push(s.axis);
            }
        }
        dirs
    }

    /// Reference sensor for the measurement direction of sensor `i`.
    pub fn reference_for(&self, i: usize) -> Result<usize> {
        let axis = &self.sensors[i].axis;
        self.references
            .iter()
            .copied()
            .find(|&r| same_axis(&self.sensors[r].axis, axis))
            .ok_or_else(|| {
                SmolError::Configuration(format!(
                    "no reference sensor for the measurement direction of sensor {i}"
                ))
            })
    }

    pub fn is_reference(&self, i: usize) -> bool {
        self.references.contains(&i)
    }

    /// Sensors that produce output channels after the spatial difference.
    pub fn measurement_sensors(&self) -> Vec<usize> {
        (0..self.sensors.len())
            .filter(|i| !self.is_reference(*i))
            .collect()
    }

    /// Copy with every sensor position multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.sensors {
            s.position *= factor;
        }
        out
    }

    pub fn from_layout(layout: &LayoutFile) -> Result<Self> {
        let sensors = layout
            .sensors
            .iter()
            .map(|e| {
                let axis = Vector3::from(e.axis);
                let n = axis.norm();
                if n == 0.0 || !n.is_finite() {
                    return Err(SmolError::Configuration(
                        "sensor axis must be non-zero".into(),
                    ));
                }
                Ok(SensorSpec {
                    position: Vector3::from(e.position_mm) * 1e-3,
                    axis: axis / n,
                    range: e.range_ut * 1e-6,
                    quantization: e.quantization_nt * 1e-9,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            sensors,
            layout.sample_rate_hz,
            layout.reference_index.clone().into_vec(),
        )
    }

    pub fn to_layout(&self) -> LayoutFile {
        LayoutFile {
            sensors: self
                .sensors
                .iter()
                .map(|s| SensorLayoutEntry {
                    position_mm: (s.position * 1e3).into(),
                    axis: s.axis.into(),
                    range_ut: s.range * 1e6,
                    quantization_nt: s.quantization * 1e9,
                })
                .collect(),
            sample_rate_hz: self.sample_rate,
            reference_index: OneOrMany::Many(self.references.clone()),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SmolError::Io(format!("{}: {e}", path.display())))?;
        let layout: LayoutFile = serde_json::from_str(&text)
            .map_err(|e| SmolError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_layout(&layout)
    }
}

fn same_axis(a: &Vector3<f64>, b: &Vector3<f64>) -> bool {
    (a - b).norm() < AXIS_TOL
}

/// JSON sensor-layout file (mm, µT, nT at the boundary).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutFile {
    pub sensors: Vec<SensorLayoutEntry>,
    pub sample_rate_hz: f64,
    pub reference_index: OneOrMany,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorLayoutEntry {
    pub position_mm: [f64; 3],
    pub axis: [f64; 3],
    #[serde(rename = "range_uT")]
    pub range_ut: f64,
    #[serde(rename = "quantization_nT")]
    pub quantization_nt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    pub fn into_vec(self) -> Vec<usize> {
        match self {
            OneOrMany::One(i) => vec![i],
            OneOrMany::Many(v) => v,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_layout_is_valid() {
        let a = SensorArray::default();
        a.validate().unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a.directions().len(), 1);
        assert_eq!(a.measurement_sensors().len(), 9);
        assert_eq!(a.reference_for(4).unwrap(), 9);
    }

    #[test]
    fn missing_reference_for_direction_is_a_configuration_error() {
        let mut a = SensorArray::default();
        a.sensors[0].axis = Vector3::x();
        let err = a.validate().unwrap_err();
        assert!(matches!(err, SmolError::Configuration(_)));
        assert!(a.reference_for(0).is_err());
    }

    #[test]
    fn layout_json_round_trip() {
        let text = r#"{
            "sensors": [
                {"position_mm": [0, 0, 0], "axis": [0, 0, 1], "range_uT": 10, "quantization_nT": 0.1},
                {"position_mm": [50, 0, 0], "axis": [0, 0, 2], "range_uT": 10, "quantization_nT": 0.1},
                {"position_mm": [-100, -100, 0], "axis": [0, 0, 1], "range_uT": 10, "quantization_nT": 0.1}
            ],
            "sample_rate_hz": 50000,
            "reference_index": 2
        }"#;
        let layout: LayoutFile = serde_json::from_str(text).unwrap();
        let a = SensorArray::from_layout(&layout).unwrap();
        assert_eq!(a.references, vec![2]);
        assert!((a.sensors[1].position.x - 0.05).abs() < 1e-15);
        assert_eq!(a.sensors[1].axis, Vector3::z());
        let again = SensorArray::from_layout(&a.to_layout()).unwrap();
        assert_eq!(again.references, a.references);
        assert!((again.sensors[2].range - 10e-6).abs() < 1e-18);
    }
}
