//! Linear filter chain applied identically to measurements and model predictions.

use serde::{Deserialize, Serialize};

use crate::model::{SensorArray, SignalFrame, Units};
use crate::{Result, SmolError};

/// Clips each channel to its sensor range and rounds to the quantization step.
///
/// Channels are matched to sensors through `frame.sensor_ids`.
pub fn saturate_quantize(frame: &SignalFrame, array: &SensorArray) -> Result<SignalFrame> {
    if frame.units != Units::Tesla {
        return Err(SmolError::Configuration(
            "saturation applies to raw tesla frames".into(),
        ));
    }
    let mut out = frame.clone();
    for (c, &id) in out.channels.iter_mut().zip(&frame.sensor_ids) {
        let s = array.sensors.get(id).ok_or_else(|| {
            SmolError::Configuration(format!(
                "frame channel refers to sensor {id}, array has {}",
                array.len()
            ))
        })?;
        for v in c.iter_mut() {
            *v = quantize(v.clamp(-s.range, s.range), s.quantization);
        }
    }
    Ok(out)
}

#[inline]
fn quantize(v: f64, step: f64) -> f64 {
    if step > 0.0 {
        (v / step).round() * step
    } else {
        v
    }
}

/// Subtracts the reference channel of the same measurement direction from every
/// other channel and drops the reference channels.
pub fn spatial_difference(frame: &SignalFrame, array: &SensorArray) -> Result<SignalFrame> {
    let mut ids = Vec::new();
    let mut channels = Vec::new();
    for (c, &id) in frame.sensor_ids.iter().enumerate() {
        if array.is_reference(id) {
            continue;
        }
        let r = array.reference_for(id)?;
        let rc = frame.channel_of(r).ok_or_else(|| {
            SmolError::Configuration(format!("reference sensor {r} missing from frame"))
        })?;
        let (a, b) = (&frame.channels[c], &frame.channels[rc]);
        channels.push(a.iter().zip(b).map(|(x, y)| x - y).collect());
        ids.push(id);
    }
    SignalFrame::new(
        frame.start_time,
        frame.sample_rate,
        frame.units,
        ids,
        channels,
    )
}

/// Centered moving mean, `passes` times, with windows shrunk to the valid range
/// at the edges.
///
/// For even windows the half-sample offset alternates between passes so that two
/// passes form a zero-phase triangular kernel of width `2·window − 1`.
pub fn moving_mean_slice(x: &mut [f64], window: usize, passes: usize, scratch: &mut Vec<f64>) {
    let n = x.len();
    if window <= 1 || n == 0 {
        return;
    }
    for p in 0..passes {
        scratch.clear();
        scratch.reserve(n + 1);
        scratch.push(0.0);
        let mut acc = 0.0;
        for v in x.iter() {
            acc += v;
            scratch.push(acc);
        }
        let back = if window % 2 == 1 {
            (window - 1) / 2
        } else {
            window / 2 - (p % 2)
        };
        let fwd = window - 1 - back;
        for (k, v) in x.iter_mut().enumerate() {
            let lo = k.saturating_sub(back);
            let hi = (k + fwd).min(n - 1);
            *v = (scratch[hi + 1] - scratch[lo]) / (hi + 1 - lo) as f64;
        }
    }
}

pub fn moving_mean(frame: &SignalFrame, window: usize, passes: usize) -> Result<SignalFrame> {
    if window == 0 {
        return Err(SmolError::InvalidParameter {
            name: "window",
            reason: "must be at least 1".into(),
        });
    }
    if window > frame.len() {
        return Err(SmolError::WindowTooLong {
            window,
            len: frame.len(),
        });
    }
    let mut out = frame.clone();
    let mut scratch = Vec::new();
    for c in out.channels.iter_mut() {
        moving_mean_slice(c, window, passes, &mut scratch);
    }
    Ok(out)
}

/// Discrete time derivative: central in the interior, one-sided at the ends.
pub fn central_difference_slice(x: &[f64], rate: f64, out: &mut Vec<f64>) {
    let n = x.len();
    out.clear();
    if n < 2 {
        out.resize(n, 0.0);
        return;
    }
    out.push((x[1] - x[0]) * rate);
    let half = 0.5 * rate;
    for k in 1..n - 1 {
        out.push((x[k + 1] - x[k - 1]) * half);
    }
    out.push((x[n - 1] - x[n - 2]) * rate);
}

pub fn central_difference(frame: &SignalFrame) -> Result<SignalFrame> {
    if frame.len() < 3 {
        return Err(SmolError::TraceTooShort {
            available: frame.len(),
            required: 3,
        });
    }
    let channels = frame
        .channels
        .iter()
        .map(|c| {
            let mut d = Vec::with_capacity(c.len());
            central_difference_slice(c, frame.sample_rate, &mut d);
            d
        })
        .collect();
    SignalFrame::new(
        frame.start_time,
        frame.sample_rate,
        Units::TeslaPerSecond,
        frame.sensor_ids.clone(),
        channels,
    )
}

/// Processing applied after digitization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterChain {
    pub spatial_difference: bool,
    pub window: usize,
    pub passes: usize,
    pub derivative: bool,
}

impl Default for FilterChain {
    fn default() -> Self {
        Self {
            spatial_difference: true,
            window: 50,
            passes: 2,
            derivative: true,
        }
    }
}

impl FilterChain {
    pub fn apply(&self, frame: &SignalFrame, array: &SensorArray) -> Result<SignalFrame> {
        let f = if self.spatial_difference {
            spatial_difference(frame, array)?
        } else {
            frame.clone()
        };
        let f = if self.passes > 0 && self.window > 1 {
            moving_mean(&f, self.window, self.passes)?
        } else {
            f
        };
        if self.derivative {
            central_difference(&f)
        } else {
            Ok(f)
        }
    }

    /// Digitization followed by [`FilterChain::apply`].
    pub fn process_raw(&self, raw: &SignalFrame, array: &SensorArray) -> Result<SignalFrame> {
        self.apply(&saturate_quantize(raw, array)?, array)
    }

    /// Samples at each end that are influenced by edge handling.
    pub fn edge_extent(&self) -> usize {
        self.passes * self.window + 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{SensorSpec, Units};
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn frame(channels: Vec<Vec<f64>>, rate: f64) -> SignalFrame {
        let ids = (0..channels.len()).collect();
        SignalFrame::new(0.0, rate, Units::Tesla, ids, channels).unwrap()
    }

    fn sine(f: f64, rate: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| (2.0 * PI * f * k as f64 / rate).sin())
            .collect()
    }

    fn interior_amp(x: &[f64], margin: usize) -> f64 {
        x[margin..x.len() - margin]
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }

    #[test]
    fn clip_and_round() {
        let arr = SensorArray::default();
        let f = frame(vec![vec![15e-6, -15e-6, 0.26e-9, 0.24e-9]; 10], 50_000.0);
        let out = saturate_quantize(&f, &arr).unwrap();
        assert_eq!(out.channels[0][0], 10e-6);
        assert_eq!(out.channels[0][1], -10e-6);
        assert_relative_eq!(out.channels[0][2], 0.3e-9, max_relative = 1e-12);
        assert_relative_eq!(out.channels[0][3], 0.2e-9, max_relative = 1e-12);
    }

    #[test]
    fn common_mode_removed_and_reference_dropped() {
        let arr = SensorArray::default();
        let common = sine(50.0, 50_000.0, 500);
        let f = frame(vec![common.clone(); 10], 50_000.0);
        let d = spatial_difference(&f, &arr).unwrap();
        assert_eq!(d.channel_count(), 9);
        assert!(!d.sensor_ids.contains(&9));
        assert!(d.channels.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn missing_reference_is_configuration_error() {
        let mut arr = SensorArray::default();
        arr.sensors.push(SensorSpec::fluxgate(
            Vector3::new(0.0, 0.1, 0.0),
            Vector3::x(),
        ));
        let f = frame(vec![vec![0.0; 4]; 11], 50_000.0);
        assert!(matches!(
            spatial_difference(&f, &arr),
            Err(SmolError::Configuration(_))
        ));
    }

    #[test]
    fn moving_mean_constant_and_attenuation() {
        let c = frame(vec![vec![3.5; 400]], 50_000.0);
        let out = moving_mean(&c, 50, 2).unwrap();
        assert!(out.channels[0].iter().all(|v| (v - 3.5).abs() < 1e-12));

        let rate = 50_000.0;
        let n = 50_000;
        let low = frame(vec![sine(103.5, rate, n)], rate);
        let out = moving_mean(&low, 50, 1).unwrap();
        let a = interior_amp(&out.channels[0], 100);
        // sinc gain of a 1 ms boxcar at 103.5 Hz is 0.9825
        assert!(a > 0.98 && a <= 1.0, "{a}");
        let hi = frame(vec![sine(5000.0, rate, 5000)], rate);
        let out = moving_mean(&hi, 50, 1).unwrap();
        assert!(interior_amp(&out.channels[0], 100) < 0.2);
    }

    #[test]
    fn moving_mean_sinc_response() {
        // a length-w boxcar has gain |sin(πfw/fs) / (w sin(πf/fs))|
        let rate = 50_000.0;
        for (f, w) in [(103.5, 50usize), (730.0, 50), (2000.0, 25)] {
            let x = frame(vec![sine(f, rate, 20_000)], rate);
            let out = moving_mean(&x, w, 1).unwrap();
            let u = PI * f / rate;
            let expected = ((u * w as f64).sin() / (w as f64 * u.sin())).abs();
            let got = interior_amp(&out.channels[0], 200);
            assert!((got - expected).abs() < 2e-3, "f {f}: {got} vs {expected}");
        }
    }

    #[test]
    fn two_passes_equal_triangular_kernel() {
        let w = 50usize;
        let x: Vec<f64> = (0..600)
            .map(|k| ((k * 7919) % 113) as f64 / 113.0 - 0.5)
            .collect();
        let mut y = x.clone();
        moving_mean_slice(&mut y, w, 2, &mut Vec::new());
        let width = 2 * w - 1;
        let kernel: Vec<f64> = (0..width)
            .map(|i| {
                let d = (i as isize - (w as isize - 1)).unsigned_abs();
                (w - d) as f64 / (w * w) as f64
            })
            .collect();
        for k in w..x.len() - w {
            let conv: f64 = (0..width).map(|i| kernel[i] * x[k + i - (w - 1)]).sum();
            assert!((conv - y[k]).abs() < 1e-12, "k {k}");
        }
    }

    #[test]
    fn moving_mean_window_too_long() {
        let c = frame(vec![vec![0.0; 10]], 1.0);
        assert_eq!(
            moving_mean(&c, 11, 1),
            Err(SmolError::WindowTooLong {
                window: 11,
                len: 10
            })
        );
    }

    #[test]
    fn derivative_examples() {
        let rate = 1000.0;
        let ramp = frame(
            vec![(0..10).map(|k| 3.0 * k as f64 / rate + 2.0).collect()],
            rate,
        );
        let d = central_difference(&ramp).unwrap();
        assert_eq!(d.units, Units::TeslaPerSecond);
        assert!(d.channels[0].iter().all(|v| (v - 3.0).abs() < 1e-9));

        // sin(ωk/fs) → rate·sin(ω/fs)·cos(ωk/fs)
        let rate = 50_000.0;
        let f = 103.5;
        let x = frame(vec![sine(f, rate, 2000)], rate);
        let d = central_difference(&x).unwrap();
        let w = 2.0 * PI * f / rate;
        for k in 1..1999 {
            let expected = rate * w.sin() * (w * k as f64).cos();
            assert!((d.channels[0][k] - expected).abs() < 1e-9 * rate);
        }
    }

    #[test]
    fn chain_is_linear() {
        let arr = SensorArray::default();
        let a: Vec<Vec<f64>> = (0..10)
            .map(|c| sine(100.0 + c as f64, 50_000.0, 800))
            .collect();
        let b: Vec<Vec<f64>> = (0..10)
            .map(|c| sine(37.0 * (c + 1) as f64, 50_000.0, 800))
            .collect();
        let fa = frame(a.clone(), 50_000.0);
        let fb = frame(b.clone(), 50_000.0);
        let fab = fa.linear_combination(2.5, &fb, -1.5).unwrap();
        let chain = FilterChain::default();
        let lhs = chain.apply(&fab, &arr).unwrap();
        let rhs = chain
            .apply(&fa, &arr)
            .unwrap()
            .linear_combination(2.5, &chain.apply(&fb, &arr).unwrap(), -1.5)
            .unwrap();
        for (x, y) in lhs
            .channels
            .iter()
            .flatten()
            .zip(rhs.channels.iter().flatten())
        {
            assert!((x - y).abs() < 1e-10 * 50_000.0);
        }
    }

    proptest! {
        #[test]
        fn each_filter_linear(
            x in proptest::collection::vec(-1.0f64..1.0, 60..120),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            w in 1usize..20,
        ) {
            let y: Vec<f64> = x.iter().rev().map(|v| v * 0.7 + 0.1).collect();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let mut s = Vec::new();
            let (mut fx, mut fy, mut fm) = (x.clone(), y.clone(), mix.clone());
            moving_mean_slice(&mut fx, w, 2, &mut s);
            moving_mean_slice(&mut fy, w, 2, &mut s);
            moving_mean_slice(&mut fm, w, 2, &mut s);
            for k in 0..x.len() {
                prop_assert!((fm[k] - (a * fx[k] + b * fy[k])).abs() < 1e-10);
            }
            let (mut dx, mut dy, mut dm) = (Vec::new(), Vec::new(), Vec::new());
            central_difference_slice(&x, 10.0, &mut dx);
            central_difference_slice(&y, 10.0, &mut dy);
            central_difference_slice(&mix, 10.0, &mut dm);
            for k in 0..x.len() {
                prop_assert!((dm[k] - (a * dx[k] + b * dy[k])).abs() < 1e-10 * 10.0);
            }
        }

        #[test]
        fn quantization_error_bounded(v in -9.9e-6f64..9.9e-6) {
            let q = quantize(v, 1e-10);
            prop_assert!((q - v).abs() <= 0.5e-10 * (1.0 + 1e-9));
        }
    }
}
