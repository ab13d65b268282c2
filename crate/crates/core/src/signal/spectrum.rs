//! Single-sided DFT amplitude spectra and tone-ratio SNR.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::model::SignalFrame;
use crate::{Result, SmolError};

/// Single-sided amplitude spectrum: a pure tone of amplitude A on an exact bin
/// reads A.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub resolution: f64,
    pub amplitudes: Vec<f64>,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.resolution
    }

    /// Largest amplitude within ±`half_width` Hz of `f` (at least the nearest bin).
    pub fn peak_near(&self, f: f64, half_width: f64) -> f64 {
        let last = self.amplitudes.len().saturating_sub(1);
        let centre = ((f / self.resolution).round() as usize).min(last);
        let span = (half_width / self.resolution).floor() as usize;
        let lo = centre.saturating_sub(span);
        let hi = (centre + span).min(last);
        self.amplitudes[lo..=hi].iter().fold(0.0, |a, v| a.max(*v))
    }
}

pub fn amplitude_spectrum(x: &[f64], sample_rate: f64) -> Spectrum {
    let n = x.len();
    if n == 0 {
        return Spectrum {
            resolution: sample_rate,
            amplitudes: Vec::new(),
        };
    }
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let amplitudes = buf[..n / 2 + 1]
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let scale = if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                1.0
            } else {
                2.0
            };
            scale * c.norm() / n as f64
        })
        .collect();
    Spectrum {
        resolution: sample_rate / n as f64,
        amplitudes,
    }
}

/// Peak amplitude near `f_signal` divided by the peak near `f_noise`, both taken
/// on the channel with the strongest `f_signal` content.
pub fn dft_snr(frame: &SignalFrame, f_signal: f64, f_noise: f64) -> Result<f64> {
    let f_min = f_signal.min(f_noise);
    if frame.duration() < 5.0 / f_min {
        return Err(SmolError::TraceTooShort {
            available: frame.len(),
            required: (5.0 / f_min * frame.sample_rate).ceil() as usize,
        });
    }
    let mut best: Option<(f64, f64)> = None;
    for c in &frame.channels {
        let s = amplitude_spectrum(c, frame.sample_rate);
        let sig = s.peak_near(f_signal, 1.0);
        if best.is_none_or(|(b, _)| sig > b) {
            best = Some((sig, s.peak_near(f_noise, 1.0)));
        }
    }
    let (sig, noise) = best.ok_or(SmolError::Empty("frame without channels"))?;
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(sig / noise)
}
