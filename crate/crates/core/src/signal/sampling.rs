//! Phase anchoring and half-period down-sampling of filtered frames.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::model::SignalFrame;
use crate::{Result, SmolError};

/// Time of an extremum of the filtered signal and the oscillator phase implied by it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseAnchor {
    /// Phase in [0, π). The sign of the channel coupling is unknown, so the true
    /// phase is either this value or this value plus π.
    pub phi: f64,
    pub anchor_time: f64,
}

/// Sampling grid of the frame the observations were taken from. Model
/// predictions reproduce its edge handling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameSpan {
    pub start_time: f64,
    pub sample_rate: f64,
    pub len: usize,
}

impl FrameSpan {
    pub fn of(frame: &SignalFrame) -> Self {
        Self {
            start_time: frame.start_time,
            sample_rate: frame.sample_rate,
            len: frame.len(),
        }
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + (self.len.max(1) - 1) as f64 / self.sample_rate
    }
}

/// Solver-ready values: `4N + 1` equidistant samples per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledObservations {
    pub sensor_ids: Vec<usize>,
    pub times: Vec<f64>,
    /// `values[c][j]` is channel `c` at `times[j]`.
    pub values: Vec<Vec<f64>>,
    pub half_periods: usize,
    pub anchor: f64,
    pub span: FrameSpan,
}

impl SampledObservations {
    pub fn total_values(&self) -> usize {
        self.values.iter().map(Vec::len).sum()
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }
}

fn channel_rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

/// Locates the first extremum of the strongest channel at least a quarter
/// period after the frame start.
///
/// The phase is read by lock-in at `f_res` over up to ten periods; extrema of the
/// derivative signal fall where the deflection crosses zero.
pub fn estimate_phase_anchor(frame: &SignalFrame, f_res: f64) -> Result<PhaseAnchor> {
    let rate = frame.sample_rate;
    let period = 1.0 / f_res;
    let skip = (0.25 * period * rate).ceil() as usize;
    let span = ((10.0 * period * rate).round() as usize).min(frame.len().saturating_sub(skip));
    if span < (period * rate) as usize {
        return Err(SmolError::TraceTooShort {
            available: frame.len(),
            required: skip + (period * rate) as usize + 1,
        });
    }
    let (best, rms) = frame
        .channels
        .iter()
        .enumerate()
        .map(|(c, x)| (c, channel_rms(&x[skip..skip + span])))
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    if !(rms > 0.0) || !rms.is_finite() {
        return Err(SmolError::NoSignal("flat frame".into()));
    }
    let w = 2.0 * PI * f_res;
    let x = &frame.channels[best][skip..skip + span];
    let (mut i_sum, mut q_sum) = (0.0, 0.0);
    for (k, v) in x.iter().enumerate() {
        let t = frame.time(skip + k);
        let (s, c) = (w * t).sin_cos();
        i_sum += v * c;
        q_sum += v * s;
    }
    let amp = 2.0 * (i_sum * i_sum + q_sum * q_sum).sqrt() / span as f64;
    // a clean tone has amplitude √2·rms
    if amp < 0.1 * std::f64::consts::SQRT_2 * rms {
        return Err(SmolError::NoSignal(format!("no component at {f_res} Hz")));
    }
    let psi = (-q_sum).atan2(i_sum);
    let t_min = frame.time(skip);
    // x ≈ A cos(ωt + ψ), extrema at ωt + ψ = kπ
    let k = ((w * t_min + psi) / PI).ceil();
    let anchor_time = (k * PI - psi) / w;
    let phi = (FRAC_PI_2 - w * anchor_time).rem_euclid(PI);
    Ok(PhaseAnchor {
        phi: if phi >= PI { 0.0 } else { phi },
        anchor_time,
    })
}

fn interpolate(frame: &SignalFrame, c: usize, t: f64) -> f64 {
    let x = &frame.channels[c];
    let pos = (t - frame.start_time) * frame.sample_rate;
    let i = (pos.floor().max(0.0) as usize).min(x.len() - 2);
    let frac = pos - i as f64;
    x[i] + (x[i + 1] - x[i]) * frac
}

/// Sample times `anchor + j/(8 f_res)` for `j = 0..=4N`.
pub fn half_period_times(f_res: f64, n: usize, anchor: f64) -> Vec<f64> {
    let dt = 1.0 / (8.0 * f_res);
    (0..=4 * n).map(|j| anchor + j as f64 * dt).collect()
}

pub fn downsample_half_periods(
    frame: &SignalFrame,
    f_res: f64,
    n: usize,
    anchor: f64,
) -> Result<SampledObservations> {
    if n == 0 {
        return Err(SmolError::InvalidParameter {
            name: "N",
            reason: "at least one half period".into(),
        });
    }
    if frame.len() < 2 {
        return Err(SmolError::TraceTooShort {
            available: frame.len(),
            required: 2,
        });
    }
    let times = half_period_times(f_res, n, anchor);
    let last = *times.last().unwrap();
    let tol = 1e-9 / frame.sample_rate;
    if times[0] < frame.start_time - tol || last > frame.end_time() + tol {
        return Err(SmolError::InsufficientSpan(format!(
            "{n} half periods from {:.6} s need data until {:.6} s, frame covers {:.6}..{:.6} s",
            anchor,
            last,
            frame.start_time,
            frame.end_time()
        )));
    }
    let values = (0..frame.channel_count())
        .map(|c| times.iter().map(|&t| interpolate(frame, c, t)).collect())
        .collect();
    Ok(SampledObservations {
        sensor_ids: frame.sensor_ids.clone(),
        times,
        values,
        half_periods: n,
        anchor,
        span: FrameSpan::of(frame),
    })
}

/// Consecutive segments of `n_seg` half periods starting at `anchor`, as many as
/// fit before `until` (or the frame end).
pub fn segment_signal(
    frame: &SignalFrame,
    f_res: f64,
    n_seg: usize,
    anchor: f64,
    until: Option<f64>,
) -> Result<Vec<SampledObservations>> {
    if n_seg == 0 {
        return Err(SmolError::InvalidParameter {
            name: "N_seg",
            reason: "at least one half period".into(),
        });
    }
    let seg = n_seg as f64 / (2.0 * f_res);
    let end = until.map_or(frame.end_time(), |u| u.min(frame.end_time()));
    let mut out = Vec::new();
    let mut k = 0usize;
    loop {
        let start = anchor + k as f64 * seg;
        if start + seg > end + 1e-9 / frame.sample_rate {
            break;
        }
        out.push(downsample_half_periods(frame, f_res, n_seg, start)?);
        k += 1;
    }
    Ok(out)
}

/// Localization rate when each fix consumes `n_seg` half periods.
pub fn nominal_rate(f_res: f64, n_seg: usize) -> f64 {
    2.0 * f_res / n_seg as f64
}
