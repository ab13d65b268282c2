//! Characterization campaigns. Trials run in parallel on the rayon pool; results are
//! collected in trial order so reports do not depend on scheduling.

mod damping;
mod interference;
mod precision;
mod scaling;
mod superfast;
mod sweep;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smol_core::model::Pose;
use smol_core::solver::LocalizationResult;

pub use damping::{run_damping_sweep, DampingCampaign, DampingFit, DampingReport, DampingRow};
pub use interference::{
    run_interference_study, static_frame, InterferenceCampaign, InterferenceReport,
    InterferenceRow, Scalpel, StaticRow,
};
pub use precision::{run_precision_vs_n, PrecisionCampaign, PrecisionReport, PrecisionRow};
pub use scaling::{
    run_scaling_study, OptimizedDevice, ScalingCampaign, ScalingReport, ScalingRow, ZProbe,
};
pub use superfast::{
    run_superfast_demo, SuperfastCampaign, SuperfastReport, SuperfastRun, SuperfastSegment,
};
pub(crate) use sweep::check_n;
pub use sweep::{
    run_rotation_sweep, run_translation_sweep, RotationCampaign, SweepPoint, SweepReport,
    TranslationCampaign,
};

use crate::closed_loop::{run_closed_loop, ClosedLoopCampaign, ClosedLoopReport};
use crate::config::Environment;
use crate::error::{LabError, Result};
use crate::seed::trial_seed;
use crate::trial::{run_trial, TrialRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn unit(self) -> Vector3<f64> {
        let mut v = Vector3::zeros();
        v[self.index()] = 1.0;
        v
    }

    pub fn name(self) -> &'static str {
        ["x", "y", "z"][self.index()]
    }
}

/// Inclusive range `start, start + step, …, stop`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Range {
    pub fn new(start: f64, stop: f64, step: f64) -> Self {
        Self { start, stop, step }
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite()) || self.stop < self.start {
            return Err(LabError::field(field, "range is empty (stop < start)"));
        }
        if self.stop > self.start && !(self.step > 0.0) {
            return Err(LabError::field(field, "step must be positive"));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.stop <= self.start || !(self.step > 0.0) {
            return vec![self.start];
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

/// Runtime switches that do not change the numbers in a report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Include per-trial wall time (breaks byte-reproducibility).
    pub timings: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Campaign {
    Translation(TranslationCampaign),
    Rotation(RotationCampaign),
    PrecisionVsN(PrecisionCampaign),
    Damping(DampingCampaign),
    Scaling(ScalingCampaign),
    Superfast(SuperfastCampaign),
    Interference(InterferenceCampaign),
    ClosedLoop(ClosedLoopCampaign),
}

impl Campaign {
    pub fn validate(&self) -> Result<()> {
        match self {
            Campaign::Translation(c) => c.validate(),
            Campaign::Rotation(c) => c.validate(),
            Campaign::PrecisionVsN(c) => c.validate(),
            Campaign::Damping(c) => c.validate(),
            Campaign::Scaling(c) => c.validate(),
            Campaign::Superfast(c) => c.validate(),
            Campaign::Interference(c) => c.validate(),
            Campaign::ClosedLoop(c) => c.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Campaign::Translation(_) => "translation",
            Campaign::Rotation(_) => "rotation",
            Campaign::PrecisionVsN(_) => "precision_vs_n",
            Campaign::Damping(_) => "damping",
            Campaign::Scaling(_) => "scaling",
            Campaign::Superfast(_) => "superfast",
            Campaign::Interference(_) => "interference",
            Campaign::ClosedLoop(_) => "closed_loop",
        }
    }

    pub fn run(&self, env: &Environment, opts: RunOptions) -> Result<CampaignReport> {
        Ok(match self {
            Campaign::Translation(c) => CampaignReport::Sweep(run_translation_sweep(env, c, opts)?),
            Campaign::Rotation(c) => CampaignReport::Sweep(run_rotation_sweep(env, c, opts)?),
            Campaign::PrecisionVsN(c) => {
                CampaignReport::PrecisionVsN(run_precision_vs_n(env, c, opts)?)
            }
            Campaign::Damping(c) => CampaignReport::Damping(run_damping_sweep(env, c, opts)?),
            Campaign::Scaling(c) => CampaignReport::Scaling(run_scaling_study(env, c, opts)?),
            Campaign::Superfast(c) => CampaignReport::Superfast(run_superfast_demo(env, c, opts)?),
            Campaign::Interference(c) => {
                CampaignReport::Interference(run_interference_study(env, c, opts)?)
            }
            Campaign::ClosedLoop(c) => CampaignReport::ClosedLoop(run_closed_loop(env, c, opts)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CampaignReport {
    Sweep(SweepReport),
    PrecisionVsN(PrecisionReport),
    Damping(DampingReport),
    Scaling(ScalingReport),
    Superfast(SuperfastReport),
    Interference(InterferenceReport),
    ClosedLoop(ClosedLoopReport),
}

impl CampaignReport {
    /// Trials or segments that produced no localization.
    pub fn failures(&self) -> usize {
        match self {
            CampaignReport::Sweep(r) => r.failed_trials,
            CampaignReport::PrecisionVsN(r) => failed(&r.trials),
            CampaignReport::Damping(r) => failed(&r.trials),
            CampaignReport::Scaling(r) => r.rows.iter().filter(|r| r.flag.is_some()).count(),
            CampaignReport::Superfast(r) => r.runs.iter().map(|run| run.failed_segments).sum(),
            CampaignReport::Interference(r) => {
                failed(&r.smol_trials)
                    + r.static_trials.iter().filter(|t| t.error.is_some()).count()
            }
            CampaignReport::ClosedLoop(r) => r.failed_localizations,
        }
    }

    /// Summary table as CSV.
    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        match self {
            CampaignReport::Sweep(r) => {
                for p in &r.points {
                    w.serialize(p)?;
                }
            }
            CampaignReport::PrecisionVsN(r) => {
                for p in &r.rows {
                    w.serialize(p)?;
                }
            }
            CampaignReport::Damping(r) => {
                for p in &r.rows {
                    w.serialize(p)?;
                }
            }
            CampaignReport::Scaling(r) => {
                w.write_record(["side_mm", "array_scale", "z_max_mm", "probes", "flag"])?;
                for p in &r.rows {
                    w.write_record([
                        p.side_mm.to_string(),
                        p.array_scale.to_string(),
                        p.z_max_mm.to_string(),
                        p.probes.len().to_string(),
                        p.flag.clone().unwrap_or_default(),
                    ])?;
                }
            }
            CampaignReport::Superfast(r) => {
                w.write_record([
                    "n_seg",
                    "nominal_rate_hz",
                    "segments",
                    "failed",
                    "outliers",
                    "sigma_x_mm",
                    "sigma_y_mm",
                    "sigma_z_mm",
                ])?;
                for run in &r.runs {
                    w.write_record([
                        run.n_seg.to_string(),
                        run.nominal_rate_hz.to_string(),
                        run.segments.len().to_string(),
                        run.failed_segments.to_string(),
                        run.outliers.to_string(),
                        run.sigma_mm[0].to_string(),
                        run.sigma_mm[1].to_string(),
                        run.sigma_mm[2].to_string(),
                    ])?;
                }
            }
            CampaignReport::Interference(r) => {
                for p in &r.rows {
                    w.serialize(p)?;
                }
            }
            CampaignReport::ClosedLoop(r) => {
                w.write_record([
                    "n",
                    "waypoints",
                    "reached",
                    "missed",
                    "completed",
                    "cycles",
                    "failed_localizations",
                    "sim_time_s",
                    "rate_hz",
                    "mean_error_mm",
                    "std_error_mm",
                ])?;
                w.write_record([
                    r.n.to_string(),
                    r.waypoints.to_string(),
                    r.reached.to_string(),
                    r.missed.to_string(),
                    r.completed.to_string(),
                    r.cycles.to_string(),
                    r.failed_localizations.to_string(),
                    r.sim_time_s.to_string(),
                    r.rate_hz.to_string(),
                    r.mean_error_mm.to_string(),
                    r.std_error_mm.to_string(),
                ])?;
            }
        }
        let bytes = w
            .into_inner()
            .map_err(|e| LabError::Campaign(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn failed(rows: &[TrialRow]) -> usize {
    rows.iter().filter(|r| !r.ok()).count()
}

/// One static trial to run: stored index, truth and half periods.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Job {
    pub point: usize,
    pub repeat: usize,
    pub seed: u64,
    pub truth: Pose,
    pub n: usize,
}

impl Job {
    pub fn new(
        env: &Environment,
        point: usize,
        seed_point: u64,
        repeat: usize,
        truth: Pose,
        n: usize,
    ) -> Self {
        Self {
            point,
            repeat,
            seed: trial_seed(env.seed, seed_point, repeat as u64),
            truth,
            n,
        }
    }
}

/// Runs jobs in parallel, returning outcomes in job order. Only errors that mean
/// "no fix for this trial" are kept per trial; anything else aborts the campaign.
pub(crate) fn run_jobs(
    env: &Environment,
    jobs: &[Job],
) -> Result<Vec<std::result::Result<LocalizationResult, LabError>>> {
    let out: Vec<_> = jobs
        .par_iter()
        .map(|j| run_trial(env, &j.truth, j.n, j.seed))
        .collect();
    out.into_iter().map(triage).collect()
}

pub(crate) fn triage<T>(r: Result<T>) -> Result<std::result::Result<T, LabError>> {
    use smol_core::SmolError as E;
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(
            e @ LabError::Core(
                E::NoSignal(_) | E::Singularity { .. } | E::InsufficientSpan(_) | E::UndefinedR2,
            ),
        ) => Ok(Err(e)),
        Err(e) => Err(e),
    }
}

pub(crate) fn rows(
    jobs: &[Job],
    outcomes: &[std::result::Result<LocalizationResult, LabError>],
    opts: RunOptions,
) -> Vec<TrialRow> {
    jobs.iter()
        .zip(outcomes)
        .map(|(j, o)| {
            let o = o
                .as_ref()
                .map_err(|e| LabError::Campaign(e.to_string()))
                .cloned();
            TrialRow::new(j.point, j.repeat, j.seed, &j.truth, &o, opts.timings)
        })
        .collect()
}

/// Position estimates (mm) grouped by point, failures skipped.
pub(crate) fn positions_by_point(
    jobs: &[Job],
    outcomes: &[std::result::Result<LocalizationResult, LabError>],
    points: usize,
) -> Vec<Vec<Vector3<f64>>> {
    let mut out = vec![Vec::new(); points];
    for (j, o) in jobs.iter().zip(outcomes) {
        if let Ok(r) = o {
            out[j.point].push(r.pose.position * 1e3);
        }
    }
    out
}

/// Position estimates (mm) of a single group of jobs, failures skipped.
pub(crate) fn positions(
    outcomes: &[std::result::Result<LocalizationResult, LabError>],
) -> Vec<Vector3<f64>> {
    outcomes
        .iter()
        .filter_map(|o| o.as_ref().ok().map(|r| r.pose.position * 1e3))
        .collect()
}

/// Pooled σ per axis over groups of position estimates (mm). NaN when too few.
pub(crate) fn pooled_sigma(groups: &[Vec<Vector3<f64>>]) -> [f64; 3] {
    let mut s = [f64::NAN; 3];
    for (a, v) in s.iter_mut().enumerate() {
        let data: Vec<Vec<f64>> = groups
            .iter()
            .map(|g| g.iter().map(|p| p[a]).collect())
            .collect();
        if let Ok(x) = smol_core::metrics::stddev(&data) {
            *v = x;
        }
    }
    s
}

pub(crate) fn mean3(s: &[f64; 3]) -> f64 {
    (s[0] + s[1] + s[2]) / 3.0
}

fn default_position() -> [f64; 3] {
    [0.0, 0.0, 80.0]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_values_inclusive() {
        assert_eq!(Range::new(-25.0, 25.0, 5.0).values().len(), 11);
        assert_eq!(Range::new(0.0, 1.0, 0.2).values().len(), 6);
        assert_eq!(
            Range::new(0.0, 340.0, 20.0).values().last().copied(),
            Some(340.0)
        );
        assert_eq!(Range::new(3.0, 3.0, 0.0).values(), vec![3.0]);
        assert!(Range::new(1.0, 0.0, 1.0).validate("r").is_err());
        assert!(Range::new(0.0, 1.0, 0.0).validate("r").is_err());
    }

    #[test]
    fn campaign_kind_tag_round_trip() {
        let text = r#"{"kind": "precision_vs_n", "ns": [1, 2]}"#;
        let c: Campaign = serde_json::from_str(text).unwrap();
        assert_eq!(c.name(), "precision_vs_n");
        let back: Campaign = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
