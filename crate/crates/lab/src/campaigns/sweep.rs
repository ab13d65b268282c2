//! Translation and rotation accuracy sweeps, evaluated differentially against a
//! reference point of the sweep itself.

use serde::{Deserialize, Serialize};
use smol_core::metrics::{
    circ_mae_diff, circ_mean, circ_std, linear_fit, mae_diff, mean, stddev, wrap_angle,
    AxisAccuracy,
};
use smol_core::model::{Pose, Quat};

use super::{default_position, rows, run_jobs, Axis, Job, Range, RunOptions};
use crate::config::Environment;
use crate::error::{LabError, Result};
use crate::trial::TrialRow;

fn default_n() -> usize {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationCampaign {
    pub axis: Axis,
    /// Swept coordinate (mm); the other two come from `position_mm`.
    pub range_mm: Range,
    #[serde(default = "default_position")]
    pub position_mm: [f64; 3],
    #[serde(default = "default_n")]
    pub n: usize,
    /// Reference value of the swept coordinate; the point nearest `position_mm` when absent.
    #[serde(default)]
    pub reference_mm: Option<f64>,
}

impl TranslationCampaign {
    pub fn new(axis: Axis, range_mm: Range, n: usize) -> Self {
        Self {
            axis,
            range_mm,
            position_mm: default_position(),
            n,
            reference_mm: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.range_mm.validate("campaign.range_mm")?;
        check_n(self.n)
    }
}

/// Rotation about one intrinsic axis of the flat device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationCampaign {
    pub axis: Axis,
    pub range_deg: Range,
    #[serde(default = "default_position")]
    pub position_mm: [f64; 3],
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub reference_deg: Option<f64>,
}

impl RotationCampaign {
    pub fn new(axis: Axis, range_deg: Range, n: usize) -> Self {
        Self {
            axis,
            range_deg,
            position_mm: default_position(),
            n,
            reference_deg: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.range_deg.validate("campaign.range_deg")?;
        check_n(self.n)
    }
}

pub(crate) fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(LabError::field("campaign.n", "at least one half period"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Ground-truth value of the swept coordinate (mm or deg).
    pub value: f64,
    /// Truth relative to the reference point.
    pub offset: f64,
    /// Mean estimate relative to the reference point's mean estimate.
    pub estimate: f64,
    pub sigma: f64,
    pub ok: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// "translation" (mm) or "rotation" (deg).
    pub sweep: String,
    pub axis: Axis,
    pub n: usize,
    pub reference_index: usize,
    pub accuracy: AxisAccuracy,
    pub points: Vec<SweepPoint>,
    pub failed_trials: usize,
    pub trials: Vec<TrialRow>,
}

fn nearest(values: &[f64], target: f64) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if (v - target).abs() < (values[best] - target).abs() {
            best = i;
        }
    }
    best
}

pub fn run_translation_sweep(
    env: &Environment,
    c: &TranslationCampaign,
    opts: RunOptions,
) -> Result<SweepReport> {
    c.validate()?;
    let values = c.range_mm.values();
    let a = c.axis.index();
    let reference = nearest(&values, c.reference_mm.unwrap_or(c.position_mm[a]));
    let jobs: Vec<Job> = values
        .iter()
        .enumerate()
        .flat_map(|(i, v)| {
            let mut p = c.position_mm;
            p[a] = *v;
            let truth = Pose::from_mm(p[0], p[1], p[2], Pose::flat_orientation());
            (0..env.repeats).map(move |r| Job::new(env, i, i as u64, r, truth, c.n))
        })
        .collect();
    let outcomes = run_jobs(env, &jobs)?;
    let mut est = vec![Vec::new(); values.len()];
    for (j, o) in jobs.iter().zip(&outcomes) {
        if let Ok(r) = o {
            est[j.point].push(r.pose.position[a] * 1e3);
        }
    }
    let trials = rows(&jobs, &outcomes, opts);
    summarize(
        "translation",
        c.axis,
        c.n,
        &values,
        reference,
        est,
        trials,
        env.repeats,
        false,
    )
}

pub fn run_rotation_sweep(
    env: &Environment,
    c: &RotationCampaign,
    opts: RunOptions,
) -> Result<SweepReport> {
    c.validate()?;
    let values = c.range_deg.values();
    let reference = match c.reference_deg {
        Some(r) => nearest(&values, r),
        None => 0,
    };
    let base = Pose::from_mm(
        c.position_mm[0],
        c.position_mm[1],
        c.position_mm[2],
        Pose::flat_orientation(),
    );
    let axis = c.axis.unit();
    let jobs: Vec<Job> = values
        .iter()
        .enumerate()
        .flat_map(|(i, v)| {
            let truth = base.with_intrinsic_rotation(&Quat::from_axis_angle(&axis, v.to_radians()));
            (0..env.repeats).map(move |r| Job::new(env, i, i as u64, r, truth, c.n))
        })
        .collect();
    let outcomes = run_jobs(env, &jobs)?;
    let base_inv = base.orientation.conjugate();
    let mut est = vec![Vec::new(); values.len()];
    for (j, o) in jobs.iter().zip(&outcomes) {
        if let Ok(r) = o {
            est[j.point].push(base_inv.mul(&r.pose.orientation).twist_angle(&axis));
        }
    }
    let trials = rows(&jobs, &outcomes, opts);
    let values_rad: Vec<f64> = values.iter().map(|v| v.to_radians()).collect();
    let mut report = summarize(
        "rotation",
        c.axis,
        c.n,
        &values_rad,
        reference,
        est,
        trials,
        env.repeats,
        true,
    )?;
    for p in &mut report.points {
        p.value = p.value.to_degrees();
        p.offset = p.offset.to_degrees();
        p.estimate = p.estimate.to_degrees();
        p.sigma = p.sigma.to_degrees();
    }
    report.accuracy.mae = report.accuracy.mae.to_degrees();
    report.accuracy.sigma = report.accuracy.sigma.to_degrees();
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn summarize(
    kind: &str,
    axis: Axis,
    n: usize,
    values: &[f64],
    reference: usize,
    est: Vec<Vec<f64>>,
    trials: Vec<TrialRow>,
    repeats: usize,
    circular: bool,
) -> Result<SweepReport> {
    if est[reference].is_empty() {
        return Err(LabError::Campaign(format!(
            "no successful localization at the reference point {}",
            values[reference]
        )));
    }
    let diff = |a: f64, b: f64| if circular { wrap_angle(a - b) } else { a - b };
    let ref_mean = if circular {
        circ_mean(&est[reference])?
    } else {
        mean(&est[reference])?
    };
    let offsets: Vec<f64> = values.iter().map(|v| v - values[reference]).collect();
    let truth: Vec<Vec<f64>> = est
        .iter()
        .zip(&offsets)
        .map(|(e, o)| vec![*o; e.len()])
        .collect();
    let mae = if circular {
        circ_mae_diff(&est, &truth, ref_mean)?
    } else {
        mae_diff(&est, &truth, ref_mean)?
    };
    let sigma = if circular {
        circ_std(&est)?
    } else {
        stddev(&est)?
    };

    let mut points = Vec::with_capacity(values.len());
    for (i, e) in est.iter().enumerate() {
        let (m, s) = if e.is_empty() {
            (f64::NAN, f64::NAN)
        } else if circular {
            // unwrapped next to the truth so a full turn stays on one line
            let m = diff(circ_mean(e)?, ref_mean);
            (
                offsets[i] + wrap_angle(m - offsets[i]),
                circ_std(std::slice::from_ref(e)).unwrap_or(f64::NAN),
            )
        } else {
            (
                mean(e)? - ref_mean,
                stddev(std::slice::from_ref(e)).unwrap_or(f64::NAN),
            )
        };
        points.push(SweepPoint {
            value: values[i],
            offset: offsets[i],
            estimate: m,
            sigma: s,
            ok: e.len(),
            failed: repeats - e.len(),
        });
    }
    let usable: Vec<&SweepPoint> = points.iter().filter(|p| p.ok > 0).collect();
    let trend_r2 = if usable.len() >= 3 {
        let x: Vec<f64> = usable.iter().map(|p| p.offset).collect();
        let y: Vec<f64> = usable.iter().map(|p| p.estimate).collect();
        linear_fit(&x, &y).ok().map(|f| f.r2)
    } else {
        None
    };
    let failed_trials = points.iter().map(|p| p.failed).sum();
    Ok(SweepReport {
        sweep: kind.into(),
        axis,
        n,
        reference_index: reference,
        accuracy: AxisAccuracy {
            axis: axis.name().into(),
            mae,
            sigma,
            trend_r2,
            points: values.len(),
            repeats,
        },
        points,
        failed_trials,
        trials,
    })
}
