use nalgebra::{Matrix3, Vector3};

use super::field::{dipole_field_unchecked, DEFAULT_MIN_DISTANCE};
use super::frame::{SignalFrame, Units};
use super::magnet::MagnetSpec;
use super::oscillator::{deflection_angle, OscillatorParams};
use super::pose::Pose;
use super::sensors::{SensorArray, SensorSpec};
use crate::{Result, SmolError};

/// Dead time between the end of excitation and the first usable sample (s).
pub const BUFFER_TIME: f64 = 0.020;

/// Instantaneous dipole position (m) and moment (A·m²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnetState {
    pub position: Vector3<f64>,
    pub moment: Vector3<f64>,
}

#[inline(always)]
fn state_from_angle(
    rq: &Matrix3<f64>,
    center: &Vector3<f64>,
    theta: f64,
    l0: f64,
    m: f64,
) -> MagnetState {
    let (s, c) = theta.sin_cos();
    let ex = rq.column(0).into_owned();
    let ez = rq.column(2).into_owned();
    // R_q (sin θ, 0, cos θ) and R_q R_y(θ) (1, 0, 0) = R_q (cos θ, 0, −sin θ)
    MagnetState {
        position: center + (ex * s + ez * c) * l0,
        moment: (ex * c - ez * s) * m,
    }
}

/// Dipole position and moment at time `t` (time measured from the end of excitation).
pub fn magnet_state(t: f64, pose: &Pose, p: &OscillatorParams, mag: &MagnetSpec) -> MagnetState {
    let rq = pose.rotation_matrix();
    state_from_angle(
        &rq,
        &pose.position,
        deflection_angle(t, p),
        p.l0,
        mag.moment(),
    )
}

/// Scalar reading of one sensor at time `t`.
///
/// Uses `r = sensor − dipole`; the dipole field is even in `r`, so the opposite
/// convention gives identical values.
pub fn sensor_reading(
    t: f64,
    pose: &Pose,
    p: &OscillatorParams,
    mag: &MagnetSpec,
    s: &SensorSpec,
) -> Result<f64> {
    let st = magnet_state(t, pose, p, mag);
    let r = s.position - st.position;
    let b = super::field::dipole_field(&st.moment, &r)?;
    Ok(b.dot(&s.axis))
}

/// How the synthesized frame begins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthesisMode {
    /// Frame starts at the end of the dead-time buffer.
    SignalOnly,
    /// Frame starts `excitation` seconds before the ring-down with saturated
    /// placeholder samples, followed by the buffer and the signal.
    WithExcitation { excitation: f64 },
}

/// Clean readings for `sensors` at `len` samples starting at `t0`, written
/// into `out[c][k]`. Pose may vary with time.
#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
pub fn synthesize_window<F>(
    pose_at: F,
    p: &OscillatorParams,
    mag: &MagnetSpec,
    sensors: &[&SensorSpec],
    t0: f64,
    sample_rate: f64,
    len: usize,
    out: &mut [Vec<f64>],
) -> Result<()>
where
    F: Fn(f64) -> Pose,
{
    debug_assert_eq!(out.len(), sensors.len());
    let m = mag.moment();
    let min2 = DEFAULT_MIN_DISTANCE * DEFAULT_MIN_DISTANCE;
    let mut cached: Option<(Pose, Matrix3<f64>)> = None;
    for c in out.iter_mut() {
        c.resize(len, 0.0);
    }
    for k in 0..len {
        let t = t0 + k as f64 / sample_rate;
        let pose = pose_at(t);
        let rq = match &cached {
            Some((cp, r)) if *cp == pose => *r,
            _ => {
                let r = pose.rotation_matrix();
                cached = Some((pose, r));
                r
            }
        };
        let st = state_from_angle(&rq, &pose.position, deflection_angle(t, p), p.l0, m);
        for (c, s) in sensors.iter().enumerate() {
            let r = s.position - st.position;
            if r.norm_squared() < min2 {
                return Err(SmolError::Singularity {
                    distance: r.norm(),
                    limit: DEFAULT_MIN_DISTANCE,
                });
            }
            out[c][k] = dipole_field_unchecked(&st.moment, &r).dot(&s.axis);
        }
    }
    Ok(())
}

/// Noise-free raw frame (tesla) for every sensor of the array.
pub fn synthesize_signal(
    pose: &Pose,
    p: &OscillatorParams,
    mag: &MagnetSpec,
    array: &SensorArray,
    duration: f64,
    mode: SynthesisMode,
) -> Result<SignalFrame> {
    synthesize_trajectory(|_| *pose, p, mag, array, duration, mode)
}

/// Like [`synthesize_signal`] for a device whose pose changes over time.
pub fn synthesize_trajectory<F>(
    pose_at: F,
    p: &OscillatorParams,
    mag: &MagnetSpec,
    array: &SensorArray,
    duration: f64,
    mode: SynthesisMode,
) -> Result<SignalFrame>
where
    F: Fn(f64) -> Pose,
{
    if !(duration > 0.0) {
        return Err(SmolError::InvalidParameter {
            name: "duration",
            reason: "must be positive".into(),
        });
    }
    p.validate()?;
    mag.validate()?;
    let rate = array.sample_rate;
    let n_signal = (duration * rate).round() as usize;
    let sensors: Vec<&SensorSpec> = array.sensors.iter().collect();
    let ids: Vec<usize> = (0..sensors.len()).collect();
    let mut channels = vec![Vec::new(); sensors.len()];
    match mode {
        SynthesisMode::SignalOnly => {
            synthesize_window(
                &pose_at,
                p,
                mag,
                &sensors,
                BUFFER_TIME,
                rate,
                n_signal,
                &mut channels,
            )?;
            SignalFrame::new(BUFFER_TIME, rate, Units::Tesla, ids, channels)
        }
        SynthesisMode::WithExcitation { excitation } => {
            if !(excitation >= 0.0) {
                return Err(SmolError::InvalidParameter {
                    name: "excitation",
                    reason: "must be non-negative".into(),
                });
            }
            let n_exc = (excitation * rate).round() as usize;
            let start = -(n_exc as f64) / rate;
            let n_ring = ((BUFFER_TIME * rate).round() as usize) + n_signal;
            let mut ring = vec![Vec::new(); sensors.len()];
            synthesize_window(&pose_at, p, mag, &sensors, 0.0, rate, n_ring, &mut ring)?;
            for ((c, r), s) in channels.iter_mut().zip(ring).zip(&sensors) {
                c.reserve(n_exc + n_ring);
                // the excitation field drives every sensor into saturation
                c.extend((0..n_exc).map(|k| if (k / 10) % 2 == 0 { s.range } else { -s.range }));
                c.extend(r);
            }
            SignalFrame::new(start, rate, Units::Tesla, ids, channels)
        }
    }
}
