use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::{Result, SmolError};

/// Physical unit of every channel in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Units {
    Tesla,
    TeslaPerSecond,
}

impl Units {
    fn label(self) -> &'static str {
        match self {
            Units::Tesla => "T",
            Units::TeslaPerSecond => "T/s",
        }
    }
}

/// Time-aligned multi-channel series.
///
/// Sample `k` of every channel was taken at `start_time + k / sample_rate`.
/// `sensor_ids[c]` is the array index of the sensor behind channel `c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalFrame {
    pub start_time: f64,
    pub sample_rate: f64,
    pub units: Units,
    pub sensor_ids: Vec<usize>,
    pub channels: Vec<Vec<f64>>,
}

impl SignalFrame {
    pub fn new(
        start_time: f64,
        sample_rate: f64,
        units: Units,
        sensor_ids: Vec<usize>,
        channels: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let f = Self {
            start_time,
            sample_rate,
            units,
            sensor_ids,
            channels,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0) {
            return Err(SmolError::InvalidParameter {
                name: "sample_rate",
                reason: "must be positive".into(),
            });
        }
        if self.sensor_ids.len() != self.channels.len() {
            return Err(SmolError::LengthMismatch(format!(
                "{} sensor ids for {} channels",
                self.sensor_ids.len(),
                self.channels.len()
            )));
        }
        let n = self.len();
        if self.channels.iter().any(|c| c.len() != n) {
            return Err(SmolError::LengthMismatch(
                "channels differ in length".into(),
            ));
        }
        Ok(())
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn time(&self, k: usize) -> f64 {
        self.start_time + k as f64 / self.sample_rate
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate
    }

    /// Channel index of a given sensor.
    pub fn channel_of(&self, sensor: usize) -> Option<usize> {
        self.sensor_ids.iter().position(|&s| s == sensor)
    }

    /// Sub-frame with the samples whose time lies in `[t0, t1)`.
    pub fn slice_time(&self, t0: f64, t1: f64) -> SignalFrame {
        let lo = ((t0 - self.start_time) * self.sample_rate - 1e-9)
            .ceil()
            .max(0.0) as usize;
        let hi = (((t1 - self.start_time) * self.sample_rate - 1e-9)
            .ceil()
            .max(0.0) as usize)
            .min(self.len());
        let lo = lo.min(hi);
        self.slice(lo, hi)
    }

    /// Sub-frame of sample indices `[lo, hi)`.
    pub fn slice(&self, lo: usize, hi: usize) -> SignalFrame {
        SignalFrame {
            start_time: self.time(lo),
            sample_rate: self.sample_rate,
            units: self.units,
            sensor_ids: self.sensor_ids.clone(),
            channels: self.channels.iter().map(|c| c[lo..hi].to_vec()).collect(),
        }
    }

    /// Element-wise `a·self + b·other`; frames must share layout.
    pub fn linear_combination(&self, a: f64, other: &SignalFrame, b: f64) -> Result<SignalFrame> {
        if self.len() != other.len()
            || self.sensor_ids != other.sensor_ids
            || self.units != other.units
        {
            return Err(SmolError::LengthMismatch("frames differ in shape".into()));
        }
        let mut out = self.clone();
        for (c, o) in out.channels.iter_mut().zip(&other.channels) {
            for (x, y) in c.iter_mut().zip(o) {
                *x = a * *x + b * *y;
            }
        }
        Ok(out)
    }

    /// CSV with a `time_s` column followed by one column per channel.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let unit = self.units.label();
        let mut header = vec!["time_s".to_string()];
        header.extend(self.sensor_ids.iter().map(|s| format!("s{s}_{unit}")));
        wtr.write_record(&header)?;
        let mut row = Vec::with_capacity(header.len());
        for k in 0..self.len() {
            row.clear();
            row.push(format!("{:.9}", self.time(k)));
            for c in &self.channels {
                row.push(format!("{:e}", c[k]));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Read a frame written by [`SignalFrame::write_csv`].
    pub fn read_csv<R: Read>(r: R) -> Result<SignalFrame> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "time_s" {
            return Err(SmolError::Parse(
                "frame CSV must start with a time_s column".into(),
            ));
        }
        let mut sensor_ids = Vec::new();
        let mut units = None;
        for h in headers.iter().skip(1) {
            let (id, unit) = h
                .strip_prefix('s')
                .and_then(|rest| rest.split_once('_'))
                .ok_or_else(|| SmolError::Parse(format!("bad channel header `{h}`")))?;
            let id: usize = id
                .parse()
                .map_err(|_| SmolError::Parse(format!("bad channel header `{h}`")))?;
            let u = match unit {
                "T" => Units::Tesla,
                "T/s" => Units::TeslaPerSecond,
                other => return Err(SmolError::Parse(format!("unknown unit `{other}`"))),
            };
            if units.is_some_and(|prev| prev != u) {
                return Err(SmolError::Parse("mixed units across channels".into()));
            }
            units = Some(u);
            sensor_ids.push(id);
        }
        let mut times = Vec::new();
        let mut channels = vec![Vec::new(); sensor_ids.len()];
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| SmolError::Parse(format!("{s}: {e}")))
            };
            times.push(parse(&rec[0])?);
            for (c, ch) in channels.iter_mut().enumerate() {
                ch.push(parse(&rec[c + 1])?);
            }
        }
        if times.len() < 2 {
            return Err(SmolError::Parse("frame CSV needs at least two rows".into()));
        }
        let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
        SignalFrame::new(
            times[0],
            1.0 / dt,
            units.unwrap_or(Units::Tesla),
            sensor_ids,
            channels,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame() -> SignalFrame {
        SignalFrame::new(
            0.5,
            1000.0,
            Units::Tesla,
            vec![0, 3],
            vec![(0..10).map(|k| k as f64 * 1e-9).collect(), vec![2e-7; 10]],
        )
        .unwrap()
    }

    #[test]
    fn rejects_ragged_channels() {
        let err = SignalFrame::new(
            0.0,
            1.0,
            Units::Tesla,
            vec![0, 1],
            vec![vec![0.0; 3], vec![0.0; 2]],
        );
        assert!(err.is_err());
    }

    #[test]
    fn slicing_by_time() {
        let f = frame();
        let s = f.slice_time(0.502, 0.505);
        assert_eq!(s.len(), 3);
        assert!((s.start_time - 0.502).abs() < 1e-12);
        assert_eq!(s.channels[0][0], 2e-9);
    }

    #[test]
    fn csv_round_trip() {
        let f = frame();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let back = SignalFrame::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.sensor_ids, f.sensor_ids);
        assert!((back.sample_rate - 1000.0).abs() < 1e-6);
        assert_eq!(back.channels, f.channels);
    }
}
