//! Environmental and sensor noise injected into raw frames.

use std::f64::consts::PI;
use std::io::Read;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{
    synthesize_signal, MagnetSpec, OscillatorParams, Pose, SensorArray, SignalFrame, SynthesisMode,
    Units,
};
use crate::signal::spectrum::amplitude_spectrum;
use crate::{Result, SmolError};

/// Raw-signal SNR against mains at the reference scenario.
pub const REFERENCE_RAW_SNR: f64 = 1.1;
/// Depth of the reference scenario (m).
pub const REFERENCE_DEPTH: f64 = 0.080;
/// Length of the reference recording (s).
pub const REFERENCE_DURATION: f64 = 2.0;
/// Third-harmonic amplitude relative to the mains fundamental.
pub const THIRD_HARMONIC_RATIO: f64 = 0.3;
/// Gain difference per metre of separation from the reference sensor, along
/// [`GRADIENT_DIRECTION`].
pub const GRADIENT_PER_METRE: f64 = 0.707;
/// Default white noise per sample (T).
pub const DEFAULT_WHITE_SIGMA: f64 = 3e-9;

pub fn gradient_direction() -> Vector3<f64> {
    Vector3::new(1.0, 1.0, 0.0).normalize()
}

/// Additional mains harmonic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub freq: f64,
    pub amp: f64,
}

/// Recorded common-mode noise, one series per measurement direction.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrace {
    pub sample_rate: f64,
    pub series: Vec<Vec<f64>>,
}

impl NoiseTrace {
    pub fn len(&self) -> usize {
        self.series.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// CSV with a `time_s` column followed by one value column (tesla) per direction.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || header.get(0) != Some("time_s") {
            return Err(SmolError::Parse(
                "noise trace needs a time_s column followed by value columns".into(),
            ));
        }
        let mut times = Vec::new();
        let mut series = vec![Vec::new(); header.len() - 1];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |i: usize| -> Result<f64> {
                rec.get(i)
                    .unwrap_or("")
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| SmolError::Parse(format!("noise trace row {}: {e}", line + 2)))
            };
            times.push(parse(0)?);
            for (i, s) in series.iter_mut().enumerate() {
                s.push(parse(i + 1)?);
            }
        }
        if times.len() < 2 {
            return Err(SmolError::TraceTooShort {
                available: times.len(),
                required: 2,
            });
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        if !(dt > 0.0) {
            return Err(SmolError::Parse("noise trace times must increase".into()));
        }
        Ok(Self {
            sample_rate: 1.0 / dt,
            series,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| SmolError::Io(format!("{}: {e}", path.display())))?;
        Self::read_csv(f)
    }
}

/// Common-mode mains interference with per-sensor gain offsets plus independent
/// white noise per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub mains_f: f64,
    pub mains_amp: f64,
    pub harmonics: Vec<Harmonic>,
    pub white_sigma: f64,
    /// Gain offset `g_i` of the common-mode noise at sensor `i`; missing entries are zero.
    pub gradient: Vec<f64>,
    #[serde(skip)]
    pub trace: Option<NoiseTrace>,
    pub seed: u64,
}

impl Default for NoiseModel {
    /// Mains amplitude calibrated against the default device and array.
    fn default() -> Self {
        static MAINS: OnceLock<f64> = OnceLock::new();
        let array = SensorArray::default();
        let gradient = default_gradient(&array);
        let mains = *MAINS.get_or_init(|| {
            calibrate_mains_amplitude(
                &OscillatorParams::default(),
                &MagnetSpec::default(),
                &array,
                &gradient,
            )
            .expect("reference scenario synthesizes")
        });
        Self::with_mains(mains, DEFAULT_WHITE_SIGMA, gradient)
    }
}

impl NoiseModel {
    pub fn silent() -> Self {
        Self {
            mains_f: 50.0,
            mains_amp: 0.0,
            harmonics: Vec::new(),
            white_sigma: 0.0,
            gradient: Vec::new(),
            trace: None,
            seed: 0,
        }
    }

    pub fn with_mains(mains_amp: f64, white_sigma: f64, gradient: Vec<f64>) -> Self {
        Self {
            mains_f: 50.0,
            mains_amp,
            harmonics: vec![Harmonic {
                freq: 150.0,
                amp: THIRD_HARMONIC_RATIO * mains_amp,
            }],
            white_sigma,
            gradient,
            trace: None,
            seed: 0,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    /// Scales every amplitude by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let mut m = self.clone();
        m.mains_amp *= k;
        m.white_sigma *= k;
        for h in &mut m.harmonics {
            h.amp *= k;
        }
        m
    }

    pub fn validate(&self) -> Result<()> {
        let amps = [self.mains_amp, self.white_sigma]
            .into_iter()
            .chain(self.harmonics.iter().map(|h| h.amp));
        for a in amps {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(SmolError::InvalidParameter {
                    name: "noise amplitude",
                    reason: format!("{a} is negative"),
                });
            }
        }
        if let Some(g) = self.gradient.iter().find(|g| g.abs() >= 0.2) {
            return Err(SmolError::InvalidParameter {
                name: "gradient",
                reason: format!("|{g}| must stay below 0.2"),
            });
        }
        Ok(())
    }

    pub fn gain(&self, sensor: usize) -> f64 {
        1.0 + self.gradient.get(sensor).copied().unwrap_or(0.0)
    }

    fn is_silent(&self) -> bool {
        self.mains_amp == 0.0
            && self.white_sigma == 0.0
            && self.harmonics.iter().all(|h| h.amp == 0.0)
            && self.trace.is_none()
    }
}

/// Gain offsets growing linearly with in-plane distance from each sensor's reference.
pub fn default_gradient(array: &SensorArray) -> Vec<f64> {
    let n = gradient_direction();
    (0..array.len())
        .map(|i| match array.reference_for(i) {
            Ok(r) if r != i => {
                GRADIENT_PER_METRE * (array.sensors[i].position - array.sensors[r].position).dot(&n)
            }
            _ => 0.0,
        })
        .collect()
}

/// Adds noise to a raw frame. Deterministic in `nm.seed`.
pub fn inject_noise(
    frame: &SignalFrame,
    array: &SensorArray,
    nm: &NoiseModel,
) -> Result<SignalFrame> {
    if frame.units != Units::Tesla {
        return Err(SmolError::Configuration(
            "noise is injected into raw tesla frames".into(),
        ));
    }
    nm.validate()?;
    if nm.is_silent() {
        return Ok(frame.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(nm.seed);
    let n = frame.len();
    let tones: Vec<(f64, f64, f64)> = std::iter::once((nm.mains_f, nm.mains_amp))
        .chain(nm.harmonics.iter().map(|h| (h.freq, h.amp)))
        .filter(|(_, a)| *a > 0.0)
        .map(|(f, a)| (f, a, rng.random_range(0.0..2.0 * PI)))
        .collect();
    let mut common: Vec<f64> = (0..n)
        .map(|k| {
            let t = frame.time(k);
            tones
                .iter()
                .map(|(f, a, p)| a * (2.0 * PI * f * t + p).cos())
                .sum()
        })
        .collect();

    let directions = array.directions();
    let mut recorded: Option<(usize, &NoiseTrace)> = None;
    if let Some(tr) = &nm.trace {
        if (tr.sample_rate - frame.sample_rate).abs() > 1e-6 * frame.sample_rate {
            return Err(SmolError::Configuration(format!(
                "noise trace sampled at {} Hz, frame at {} Hz",
                tr.sample_rate, frame.sample_rate
            )));
        }
        if tr.len() < n {
            return Err(SmolError::TraceTooShort {
                available: tr.len(),
                required: n,
            });
        }
        if tr.series.len() < directions.len() {
            return Err(SmolError::Configuration(format!(
                "noise trace has {} series, array has {} measurement directions",
                tr.series.len(),
                directions.len()
            )));
        }
        let offset = rng.random_range(0..=tr.len() - n);
        recorded = Some((offset, tr));
    }

    let white = if nm.white_sigma > 0.0 {
        Some(
            Normal::new(0.0, nm.white_sigma).map_err(|e| SmolError::InvalidParameter {
                name: "white_sigma",
                reason: e.to_string(),
            })?,
        )
    } else {
        None
    };
    let mut out = frame.clone();
    for (c, &id) in frame.sensor_ids.iter().enumerate() {
        let gain = nm.gain(id);
        let ch = &mut out.channels[c];
        if let Some((offset, tr)) = recorded {
            let axis = array.sensors.get(id).map(|s| s.axis).ok_or_else(|| {
                SmolError::Configuration(format!(
                    "frame channel refers to sensor {id}, array has {}",
                    array.len()
                ))
            })?;
            let dir = directions
                .iter()
                .position(|d| (d - axis).norm() < 1e-6)
                .unwrap_or(0);
            let series = &tr.series[dir][offset..offset + n];
            for (k, v) in ch.iter_mut().enumerate() {
                *v += gain * (common[k] + series[k]);
            }
        } else {
            for (v, cm) in ch.iter_mut().zip(&common) {
                *v += gain * cm;
            }
        }
        if let Some(w) = &white {
            for v in ch.iter_mut() {
                *v += w.sample(&mut rng);
            }
        }
    }
    common.clear();
    Ok(out)
}

/// Mains amplitude giving [`REFERENCE_RAW_SNR`] on the strongest raw channel of the
/// reference recording.
pub fn calibrate_mains_amplitude(
    osc: &OscillatorParams,
    mag: &MagnetSpec,
    array: &SensorArray,
    gradient: &[f64],
) -> Result<f64> {
    let pose = Pose::reference(REFERENCE_DEPTH);
    let frame = synthesize_signal(
        &pose,
        osc,
        mag,
        array,
        REFERENCE_DURATION,
        SynthesisMode::SignalOnly,
    )?;
    let (c, amp) = frame
        .channels
        .iter()
        .enumerate()
        .filter(|(c, _)| !array.is_reference(frame.sensor_ids[*c]))
        .map(|(c, x)| {
            (
                c,
                amplitude_spectrum(x, frame.sample_rate).peak_near(osc.f_res, 1.0),
            )
        })
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    if amp == 0.0 {
        return Err(SmolError::NoSignal(
            "reference scenario produced no signal".into(),
        ));
    }
    let gain = 1.0 + gradient.get(frame.sensor_ids[c]).copied().unwrap_or(0.0);
    Ok(amp / (REFERENCE_RAW_SNR * gain))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clean() -> (SensorArray, SignalFrame) {
        let arr = SensorArray::default();
        let f = synthesize_signal(
            &Pose::reference(0.08),
            &OscillatorParams::default(),
            &MagnetSpec::default(),
            &arr,
            0.05,
            SynthesisMode::SignalOnly,
        )
        .unwrap();
        (arr, f)
    }

    #[test]
    fn silent_model_is_identity() {
        let (arr, f) = clean();
        assert_eq!(
            inject_noise(&f, &arr, &NoiseModel::silent().with_seed(9)).unwrap(),
            f
        );
    }

    #[test]
    fn deterministic_under_seed() {
        let (arr, f) = clean();
        let nm = NoiseModel::default().with_seed(42);
        let a = inject_noise(&f, &arr, &nm).unwrap();
        let b = inject_noise(&f, &arr, &nm).unwrap();
        assert_eq!(a, b);
        let c = inject_noise(&f, &arr, &nm.with_seed(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn default_gradient_bounds() {
        let arr = SensorArray::default();
        let g = default_gradient(&arr);
        assert_eq!(g[9], 0.0);
        assert!((g[4] - 0.1).abs() < 1e-3, "{}", g[4]);
        assert!(g.iter().all(|v| v.abs() < 0.2));
        assert!(NoiseModel::default().validate().is_ok());
    }

    #[test]
    fn trace_shorter_than_frame_rejected() {
        let (arr, f) = clean();
        let mut nm = NoiseModel::silent();
        nm.trace = Some(NoiseTrace {
            sample_rate: 50_000.0,
            series: vec![vec![0.0; 10]],
        });
        assert!(matches!(
            inject_noise(&f, &arr, &nm),
            Err(SmolError::TraceTooShort { .. })
        ));
    }

    #[test]
    fn trace_csv_roundtrip() {
        let text = "time_s,value_T\n0,1e-9\n0.00002,2e-9\n0.00004,-1e-9\n";
        let tr = NoiseTrace::read_csv(text.as_bytes()).unwrap();
        assert_eq!(tr.len(), 3);
        assert!((tr.sample_rate - 50_000.0).abs() < 1e-6);
        assert!(NoiseTrace::read_csv("t,v\n0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn trace_enters_with_gain() {
        let (arr, f) = clean();
        let mut nm = NoiseModel::silent();
        nm.gradient = default_gradient(&arr);
        nm.trace = Some(NoiseTrace {
            sample_rate: 50_000.0,
            series: vec![vec![1e-9; f.len()]],
        });
        let out = inject_noise(&f, &arr, &nm).unwrap();
        let d = out.channels[4][10] - f.channels[4][10];
        assert!((d - 1e-9 * nm.gain(4)).abs() < 1e-20);
    }
}
