//! Model predictions processed exactly like measurements.

use serde::{Deserialize, Serialize};

use crate::model::{
    dipole_field, magnet_state, synthesize_window, MagnetSpec, OscillatorParams, Pose, SensorArray,
    SensorSpec,
};
use crate::signal::{
    central_difference_slice, moving_mean_slice, FilterChain, FrameSpan, SampledObservations,
};
use crate::{Result, SmolError};

/// Everything needed to predict the processed signal of a device at a pose.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitContext {
    pub oscillator: OscillatorParams,
    pub magnet: MagnetSpec,
    pub array: SensorArray,
    pub chain: FilterChain,
}

impl FitContext {
    pub fn new(
        oscillator: OscillatorParams,
        magnet: MagnetSpec,
        array: SensorArray,
        chain: FilterChain,
    ) -> Self {
        Self {
            oscillator,
            magnet,
            array,
            chain,
        }
    }

    pub fn with_phase(&self, phi: f64) -> Self {
        let mut c = self.clone();
        c.oscillator.phi = phi;
        c
    }

    pub fn validate(&self) -> Result<()> {
        self.oscillator.validate()?;
        self.magnet.validate()?;
        self.array.validate()
    }
}

/// Reusable buffers for repeated predictions.
#[derive(Debug, Default)]
pub struct Workspace {
    raw: Vec<Vec<f64>>,
    buf: Vec<f64>,
    scratch: Vec<f64>,
    deriv: Vec<f64>,
}

/// Raw sensor set needed for `ids`: the channels themselves followed by the
/// references they are differenced against. Returns (sensor list, reference slot per channel).
fn needed_sensors(ctx: &FitContext, ids: &[usize]) -> Result<(Vec<usize>, Vec<Option<usize>>)> {
    let mut sensors: Vec<usize> = ids.to_vec();
    let mut refs = Vec::with_capacity(ids.len());
    for &id in ids {
        if id >= ctx.array.len() {
            return Err(SmolError::Configuration(format!(
                "sensor {id} not in array of {}",
                ctx.array.len()
            )));
        }
        if ctx.chain.spatial_difference {
            let r = ctx.array.reference_for(id)?;
            let slot = match sensors.iter().position(|s| *s == r) {
                Some(p) => p,
                None => {
                    sensors.push(r);
                    sensors.len() - 1
                }
            };
            refs.push(Some(slot));
        } else {
            refs.push(None);
        }
    }
    Ok((sensors, refs))
}

/// Predicted processed values at `times` for channels `ids`, appended to `out`
/// channel by channel.
///
/// Only the raw window around the sample times is synthesized. The window is
/// clamped to `span` so the filter edges coincide with those of the measured frame.
#[allow(clippy::too_many_arguments)]
pub fn predict_into(
    ctx: &FitContext,
    pose: &Pose,
    ids: &[usize],
    times: &[f64],
    span: &FrameSpan,
    ws: &mut Workspace,
    out: &mut Vec<f64>,
) -> Result<()> {
    if times.is_empty() {
        return Ok(());
    }
    let rate = span.sample_rate;
    let margin = (ctx.chain.passes * ctx.chain.window + 4) as isize;
    let first = ((times[0] - span.start_time) * rate).floor() as isize - margin;
    let last = ((times[times.len() - 1] - span.start_time) * rate).ceil() as isize + margin;
    let lo = first.max(0) as usize;
    let hi = (last.min(span.len as isize - 1)).max(lo as isize + 1) as usize;
    let len = hi - lo + 1;
    let t0 = span.start_time + lo as f64 / rate;

    let (sensors, refs) = needed_sensors(ctx, ids)?;
    let specs: Vec<&SensorSpec> = sensors.iter().map(|&s| &ctx.array.sensors[s]).collect();
    ws.raw.resize(specs.len(), Vec::new());
    synthesize_window(
        |_| *pose,
        &ctx.oscillator,
        &ctx.magnet,
        &specs,
        t0,
        rate,
        len,
        &mut ws.raw[..specs.len()],
    )?;

    for (c, r) in refs.iter().enumerate() {
        let mut x = std::mem::take(&mut ws.buf);
        x.clear();
        x.extend_from_slice(&ws.raw[c]);
        if let Some(slot) = r {
            for (v, rv) in x.iter_mut().zip(&ws.raw[*slot]) {
                *v -= rv;
            }
        }
        moving_mean_slice(&mut x, ctx.chain.window, ctx.chain.passes, &mut ws.scratch);
        let series: &[f64] = if ctx.chain.derivative {
            central_difference_slice(&x, rate, &mut ws.deriv);
            &ws.deriv
        } else {
            &x
        };
        for &t in times {
            let pos = (t - t0) * rate;
            let i = (pos.floor().max(0.0) as usize).min(len - 2);
            let frac = pos - i as f64;
            out.push(series[i] + (series[i + 1] - series[i]) * frac);
        }
        ws.buf = x;
    }
    Ok(())
}

/// Predicted values shaped like `obs.values`.
pub fn model_observations(
    pose: &Pose,
    ctx: &FitContext,
    obs: &SampledObservations,
) -> Result<Vec<Vec<f64>>> {
    let mut flat = Vec::with_capacity(obs.total_values());
    predict_into(
        ctx,
        pose,
        &obs.sensor_ids,
        &obs.times,
        &obs.span,
        &mut Workspace::default(),
        &mut flat,
    )?;
    Ok(flat.chunks(obs.times.len()).map(<[f64]>::to_vec).collect())
}

/// Cheap approximation of [`predict_into`] for seeding: the time derivative by
/// a two-point difference at each sample time, without smoothing.
pub fn predict_coarse(
    ctx: &FitContext,
    pose: &Pose,
    ids: &[usize],
    times: &[f64],
    out: &mut Vec<f64>,
) -> Result<()> {
    let (sensors, refs) = needed_sensors(ctx, ids)?;
    let h = 1e-5;
    let start = out.len();
    out.resize(start + ids.len() * times.len(), 0.0);
    for (j, &t) in times.iter().enumerate() {
        let a = magnet_state(t - h, pose, &ctx.oscillator, &ctx.magnet);
        let b = magnet_state(t + h, pose, &ctx.oscillator, &ctx.magnet);
        let read = |st: &crate::model::MagnetState, s: usize| -> Result<f64> {
            let spec = &ctx.array.sensors[sensors[s]];
            Ok(dipole_field(&st.moment, &(spec.position - st.position))?.dot(&spec.axis))
        };
        for (c, r) in refs.iter().enumerate() {
            let mut d = read(&b, c)? - read(&a, c)?;
            if let Some(slot) = r {
                d -= read(&b, *slot)? - read(&a, *slot)?;
            }
            out[start + c * times.len() + j] = if ctx.chain.derivative {
                d / (2.0 * h)
            } else {
                d
            };
        }
    }
    Ok(())
}
