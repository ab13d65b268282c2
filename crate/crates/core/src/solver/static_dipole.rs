//! Five-degree-of-freedom localization of a static dipole from DC field values.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LeastSquares, LmConfig};
use crate::metrics::sse_tss_r2;
use crate::model::{dipole_field, SensorArray, SignalFrame};
use crate::{Result, SmolError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticFitResult {
    pub position: Vector3<f64>,
    /// Unit moment direction.
    pub direction: Vector3<f64>,
    pub sse: f64,
    pub r2: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Mean of each reference-subtracted channel over `[t0, t0 + window)` of a raw frame.
pub fn dc_observations(
    frame: &SignalFrame,
    array: &SensorArray,
    t0: f64,
    window: f64,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let part = frame.slice_time(t0, t0 + window);
    if part.is_empty() {
        return Err(SmolError::InsufficientSpan(format!(
            "no samples in {t0}..{} s",
            t0 + window
        )));
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    let mut ids = Vec::new();
    let mut values = Vec::new();
    for (c, &id) in part.sensor_ids.iter().enumerate() {
        if array.is_reference(id) {
            continue;
        }
        let r = array.reference_for(id)?;
        let rc = part
            .channel_of(r)
            .ok_or_else(|| SmolError::Configuration(format!("reference {r} missing")))?;
        ids.push(id);
        values.push(mean(&part.channels[c]) - mean(&part.channels[rc]));
    }
    Ok((ids, values))
}

fn direction(polar: f64, azimuth: f64) -> Vector3<f64> {
    Vector3::new(
        polar.sin() * azimuth.cos(),
        polar.sin() * azimuth.sin(),
        polar.cos(),
    )
}

/// Reference-subtracted static field readings for a dipole.
pub fn static_prediction(
    array: &SensorArray,
    ids: &[usize],
    position: &Vector3<f64>,
    moment: &Vector3<f64>,
) -> Result<Vec<f64>> {
    ids.iter()
        .map(|&id| {
            let s = &array.sensors[id];
            let r = &array.sensors[array.reference_for(id)?];
            let b = dipole_field(moment, &(s.position - position))?.dot(&s.axis);
            let br = dipole_field(moment, &(r.position - position))?.dot(&r.axis);
            Ok(b - br)
        })
        .collect()
}

struct StaticProblem<'a> {
    array: &'a SensorArray,
    ids: &'a [usize],
    observed: &'a [f64],
    moment: f64,
}

impl LeastSquares for StaticProblem<'_> {
    fn residuals(&mut self, p: &[f64], out: &mut Vec<f64>) -> Result<()> {
        let m = direction(p[3], p[4]) * self.moment;
        let pred = static_prediction(self.array, self.ids, &Vector3::new(p[0], p[1], p[2]), &m)?;
        out.clear();
        out.extend(pred.iter().zip(self.observed).map(|(a, b)| a - b));
        Ok(())
    }

    fn steps(&self, _p: &[f64]) -> Vec<f64> {
        vec![1e-7, 1e-7, 1e-7, 1e-7, 1e-7]
    }
}

/// Fits position and moment direction with the moment magnitude fixed.
pub fn static_localize(
    ids: &[usize],
    observed: &[f64],
    array: &SensorArray,
    moment: f64,
    init_position: &Vector3<f64>,
    init_direction: &Vector3<f64>,
    lm: &LmConfig,
) -> Result<StaticFitResult> {
    if ids.len() != observed.len() {
        return Err(SmolError::LengthMismatch(format!(
            "{} sensors vs {} values",
            ids.len(),
            observed.len()
        )));
    }
    if observed.iter().all(|v| v.abs() <= 1e-18) {
        return Err(SmolError::NoSignal("all DC values are zero".into()));
    }
    let d = init_direction.normalize();
    let x0 = [
        init_position.x,
        init_position.y,
        init_position.z,
        d.z.clamp(-1.0, 1.0).acos(),
        d.y.atan2(d.x),
    ];
    let mut prob = StaticProblem {
        array,
        ids,
        observed,
        moment,
    };
    let out = levenberg_marquardt(&mut prob, &x0, lm)?;
    let p = &out.params;
    let position = Vector3::new(p[0], p[1], p[2]);
    let dir = direction(p[3], p[4]);
    let pred = static_prediction(array, ids, &position, &(dir * moment))?;
    let r2 = sse_tss_r2(observed, &pred)
        .map(|q| q.r2)
        .unwrap_or(f64::NAN);
    Ok(StaticFitResult {
        position,
        direction: dir,
        sse: out.sse,
        r2,
        iterations: out.iterations,
        converged: out.converged,
    })
}
