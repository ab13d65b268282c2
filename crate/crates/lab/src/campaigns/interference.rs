//! Oscillating versus static tracker next to a moving ferromagnetic tool.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smol_core::metrics::{mae_diff, mean, stddev};
use smol_core::model::{dipole_field, Pose, SensorArray, SignalFrame, Units};
use smol_core::signal::{inject_noise, saturate_quantize};
use smol_core::solver::{dc_observations, static_localize, LocalizationResult};

use super::sweep::check_n;
use super::{rows, triage, Job, Range, RunOptions};
use crate::config::Environment;
use crate::error::{LabError, Result};
use crate::seed::splitmix64;
use crate::trial::{frame_duration, localize_raw, noisy_frame, perturbed, Disturbance, TrialRow};

/// Moving dipole standing in for a steel instrument.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scalpel {
    pub moment_ma_m2: f64,
    /// Unit direction of the moment.
    pub direction: [f64; 3],
    /// Position at t = 0 of repetition 0 (mm).
    pub start_mm: [f64; 3],
    pub velocity_mm_s: [f64; 3],
    /// Start offset added per repetition (mm).
    pub shift_per_repeat_mm: [f64; 3],
}

impl Default for Scalpel {
    fn default() -> Self {
        Self {
            moment_ma_m2: 15.97,
            // blade held upright over the workspace, magnetized along its length
            direction: [0.0, 0.0, 1.0],
            start_mm: [40.0, 40.0, 80.0],
            velocity_mm_s: [0.0, -30.0, 0.0],
            shift_per_repeat_mm: [0.0, -4.0, 0.0],
        }
    }
}

impl Scalpel {
    pub fn moment(&self) -> Vector3<f64> {
        Vector3::from(self.direction).normalize() * self.moment_ma_m2 * 1e-3
    }

    pub fn position(&self, repeat: usize, t: f64) -> Vector3<f64> {
        let p = Vector3::from(self.start_mm)
            + Vector3::from(self.shift_per_repeat_mm) * repeat as f64
            + Vector3::from(self.velocity_mm_s) * t;
        p * 1e-3
    }

    /// Adds the tool's field to every channel of a raw frame.
    pub fn add_to(
        &self,
        frame: &mut SignalFrame,
        array: &SensorArray,
        repeat: usize,
    ) -> Result<()> {
        let m = self.moment();
        if m.norm() == 0.0 {
            return Ok(());
        }
        for k in 0..frame.len() {
            let p = self.position(repeat, frame.time(k));
            for (c, &id) in frame.sensor_ids.iter().enumerate() {
                let s = &array.sensors[id];
                frame.channels[c][k] += dipole_field(&m, &(s.position - p))?.dot(&s.axis);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceCampaign {
    #[serde(default = "default_z")]
    pub z_mm: Range,
    #[serde(default)]
    pub scalpel: Scalpel,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Averaging window of the static tracker.
    #[serde(default = "default_dc_window")]
    pub dc_window_s: f64,
}

fn default_z() -> Range {
    Range::new(80.0, 100.0, 5.0)
}
fn default_n() -> usize {
    10
}
fn default_dc_window() -> f64 {
    0.1
}

impl Default for InterferenceCampaign {
    fn default() -> Self {
        Self {
            z_mm: default_z(),
            scalpel: Scalpel::default(),
            n: default_n(),
            dc_window_s: default_dc_window(),
        }
    }
}

impl InterferenceCampaign {
    pub fn validate(&self) -> Result<()> {
        self.z_mm.validate("campaign.z_mm")?;
        check_n(self.n)?;
        if !(self.dc_window_s > 0.0) {
            return Err(LabError::field("campaign.dc_window_s", "must be positive"));
        }
        if !(self.scalpel.moment_ma_m2 >= 0.0)
            || Vector3::from(self.scalpel.direction).norm() == 0.0
        {
            return Err(LabError::field(
                "campaign.scalpel",
                "needs a non-negative moment and a non-zero direction",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticRow {
    pub point: usize,
    pub repeat: usize,
    pub seed: u64,
    pub scalpel: bool,
    pub truth_mm: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub position_mm: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direction: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Static fixes farther than this from the array origin count as diverged (m).
pub const STATIC_DIVERGED_M: f64 = 0.5;

/// Differential z accuracy of one tracker type with or without the tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceRow {
    pub tracker: String,
    pub dof: usize,
    pub moment_ma_m2: f64,
    pub scalpel: bool,
    pub mae_z_mm: f64,
    pub sigma_z_mm: f64,
    pub ok: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceReport {
    pub rows: Vec<InterferenceRow>,
    /// Static MAE with the tool over static MAE without.
    pub static_degradation: f64,
    /// |SMOL MAE with tool / without − 1|.
    pub smol_change: f64,
    pub smol_trials: Vec<TrialRow>,
    pub static_trials: Vec<StaticRow>,
}

/// Raw frame of a non-oscillating magnet with the device's moment, held along the rest direction of `pose`.
pub fn static_frame(env: &Environment, pose: &Pose, duration: f64) -> Result<SignalFrame> {
    let array = &env.ctx.array;
    let m = pose.rotation_matrix().column(0) * env.ctx.magnet.moment();
    let len = (duration * array.sample_rate).round() as usize;
    let channels = array
        .sensors
        .iter()
        .map(|s| {
            Ok(vec![
                dipole_field(&m, &(s.position - pose.position))?
                    .dot(&s.axis);
                len
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SignalFrame::new(
        0.0,
        array.sample_rate,
        Units::Tesla,
        (0..array.len()).collect(),
        channels,
    )?)
}

fn static_trial(
    env: &Environment,
    c: &InterferenceCampaign,
    job: &Job,
    tool: bool,
) -> Result<StaticRow> {
    let array = &env.ctx.array;
    let mut raw = static_frame(env, &job.truth, c.dc_window_s)?;
    if tool {
        c.scalpel.add_to(&mut raw, array, job.repeat)?;
    }
    let raw = saturate_quantize(
        &inject_noise(&raw, array, &env.noise.with_seed(job.seed))?,
        array,
    )?;
    let (ids, values) = dc_observations(&raw, array, 0.0, c.dc_window_s)?;
    let start = perturbed(&job.truth, job.seed);
    let dir = start.rotation_matrix().column(0).into_owned();
    let mm = job.truth.position * 1e3;
    let mut row = StaticRow {
        point: job.point,
        repeat: job.repeat,
        seed: job.seed,
        scalpel: tool,
        truth_mm: [mm.x, mm.y, mm.z],
        position_mm: None,
        direction: None,
        r2: None,
        error: None,
    };
    match triage(
        static_localize(
            &ids,
            &values,
            array,
            env.ctx.magnet.moment(),
            &start.position,
            &dir,
            &env.solver.lm,
        )
        .map_err(LabError::from),
    )? {
        Ok(f) if f.position.norm() > STATIC_DIVERGED_M => {
            row.error = Some(format!(
                "diverged to {:.3} m from the array",
                f.position.norm()
            ));
        }
        Ok(f) => {
            let p = f.position * 1e3;
            row.position_mm = Some([p.x, p.y, p.z]);
            row.direction = Some([f.direction.x, f.direction.y, f.direction.z]);
            row.r2 = Some(f.r2);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    Ok(row)
}

fn smol_trial(
    env: &Environment,
    c: &InterferenceCampaign,
    job: &Job,
    tool: bool,
) -> Result<LocalizationResult> {
    let add = |f: &mut SignalFrame| c.scalpel.add_to(f, &env.ctx.array, job.repeat);
    let disturb: Option<Disturbance> = if tool { Some(&add) } else { None };
    let raw = noisy_frame(
        env,
        &job.truth,
        frame_duration(env.ctx.oscillator.f_res, job.n),
        job.seed,
        disturb,
    )?;
    localize_raw(env, &raw, job.n, &perturbed(&job.truth, job.seed))
}

/// Differential z accuracy (reference: the first depth) from z estimates grouped by depth.
/// Without any fix at the reference depth the accuracy is unbounded.
fn z_accuracy(values: &[f64], est: &[Vec<f64>]) -> Result<(f64, f64)> {
    if est[0].is_empty() {
        return Ok((f64::INFINITY, f64::NAN));
    }
    let ref_mean = mean(&est[0])?;
    let truth: Vec<Vec<f64>> = est
        .iter()
        .zip(values)
        .map(|(e, v)| vec![v - values[0]; e.len()])
        .collect();
    Ok((
        mae_diff(est, &truth, ref_mean)?,
        stddev(est).unwrap_or(f64::NAN),
    ))
}

pub fn run_interference_study(
    env: &Environment,
    c: &InterferenceCampaign,
    opts: RunOptions,
) -> Result<InterferenceReport> {
    c.validate()?;
    let values = c.z_mm.values();
    let jobs: Vec<Job> = values
        .iter()
        .enumerate()
        .flat_map(|(i, z)| {
            let truth = Pose::from_mm(0.0, 0.0, *z, Pose::flat_orientation());
            (0..env.repeats).map(move |r| Job::new(env, i, i as u64, r, truth, c.n))
        })
        .collect();
    // the same noise realization with and without the tool
    let tasks: Vec<(usize, bool)> = [false, true]
        .iter()
        .flat_map(|&t| (0..jobs.len()).map(move |j| (j, t)))
        .collect();
    let smol: Vec<_> = tasks
        .par_iter()
        .map(|&(j, t)| smol_trial(env, c, &jobs[j], t))
        .collect();
    let smol = smol.into_iter().map(triage).collect::<Result<Vec<_>>>()?;
    let statics: Vec<_> = tasks
        .par_iter()
        .map(|&(j, t)| {
            let mut job = jobs[j];
            job.seed = splitmix64(job.seed);
            static_trial(env, c, &job, t)
        })
        .collect();
    let statics = statics.into_iter().collect::<Result<Vec<_>>>()?;

    let m_dev = env.ctx.magnet.moment() * 1e3;
    let mut out_rows = Vec::new();
    let mut mae = [[0.0; 2]; 2];
    for (ti, tool) in [false, true].into_iter().enumerate() {
        let mut smol_est = vec![Vec::new(); values.len()];
        let mut static_est = vec![Vec::new(); values.len()];
        for (k, &(j, t)) in tasks.iter().enumerate() {
            if t != tool {
                continue;
            }
            if let Ok(r) = &smol[k] {
                smol_est[jobs[j].point].push(r.pose.position.z * 1e3);
            }
            if let Some(p) = statics[k].position_mm {
                static_est[jobs[j].point].push(p[2]);
            }
        }
        for (mi, (name, dof, est)) in [("smol", 6, &smol_est), ("static", 5, &static_est)]
            .into_iter()
            .enumerate()
        {
            let (m, s) = z_accuracy(&values, est)?;
            mae[mi][ti] = m;
            out_rows.push(InterferenceRow {
                tracker: name.into(),
                dof,
                moment_ma_m2: m_dev,
                scalpel: tool,
                mae_z_mm: m,
                sigma_z_mm: s,
                ok: est.iter().map(Vec::len).sum(),
            });
        }
    }
    let all_jobs: Vec<Job> = tasks
        .iter()
        .map(|&(j, t)| {
            // tool trials are stored as points after the clean ones
            let mut job = jobs[j];
            if t {
                job.point += values.len();
            }
            job
        })
        .collect();
    Ok(InterferenceReport {
        rows: out_rows,
        static_degradation: mae[1][1] / mae[1][0],
        smol_change: (mae[0][1] / mae[0][0] - 1.0).abs(),
        smol_trials: rows(&all_jobs, &smol, opts),
        static_trials: statics,
    })
}
