//! Segment-wise localization of one ring-down while the device steps along x.

use serde::{Deserialize, Serialize};
use smol_core::model::{synthesize_trajectory, DampingLaw, Pose, SynthesisMode};
use smol_core::signal::{estimate_phase_anchor, inject_noise, nominal_rate};
use smol_core::solver::{localize_superfast, InitialGuess, LocalizationRecord};

use super::sweep::check_n;
use super::{default_position, mean3, pooled_sigma, Axis, RunOptions};
use crate::config::Environment;
use crate::error::{LabError, Result};
use crate::seed::trial_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperfastCampaign {
    #[serde(default = "default_n_segs")]
    pub n_segs: Vec<usize>,
    #[serde(default = "default_axis")]
    pub axis: Axis,
    /// Start of the stepped motion.
    #[serde(default = "default_position")]
    pub position_mm: [f64; 3],
    #[serde(default = "default_travel")]
    pub travel_mm: f64,
    #[serde(default = "default_step")]
    pub step_mm: f64,
    /// Whole ring-down; the plateaus split it evenly.
    #[serde(default = "default_duration")]
    pub duration_s: f64,
    /// Window over which σ is evaluated.
    #[serde(default = "default_window")]
    pub window_s: f64,
    /// Ring-down envelope for this run; the long signal needs a law that does not reach zero.
    #[serde(default = "default_damping")]
    pub damping: DampingLaw,
    /// Estimates of the swept coordinate outside this band count as outliers (mm).
    #[serde(default = "default_bounds")]
    pub outlier_bounds_mm: [f64; 2],
}

fn default_n_segs() -> Vec<usize> {
    vec![4, 1]
}
fn default_axis() -> Axis {
    Axis::X
}
fn default_travel() -> f64 {
    50.0
}
fn default_step() -> f64 {
    5.0
}
fn default_duration() -> f64 {
    2.4
}
fn default_window() -> f64 {
    1.5
}
fn default_damping() -> DampingLaw {
    DampingLaw::Exponential
}
fn default_bounds() -> [f64; 2] {
    [-1.0, 60.0]
}

impl Default for SuperfastCampaign {
    fn default() -> Self {
        Self {
            n_segs: default_n_segs(),
            axis: default_axis(),
            position_mm: default_position(),
            travel_mm: default_travel(),
            step_mm: default_step(),
            duration_s: default_duration(),
            window_s: default_window(),
            damping: default_damping(),
            outlier_bounds_mm: default_bounds(),
        }
    }
}

impl SuperfastCampaign {
    pub fn validate(&self) -> Result<()> {
        if self.n_segs.is_empty() {
            return Err(LabError::field("campaign.n_segs", "empty list"));
        }
        self.n_segs.iter().try_for_each(|n| check_n(*n))?;
        if !(self.step_mm > 0.0) || !(self.travel_mm >= 0.0) {
            return Err(LabError::field(
                "campaign.step_mm",
                "needs a positive step and non-negative travel",
            ));
        }
        if !(self.duration_s > 0.0 && self.window_s > 0.0) {
            return Err(LabError::field(
                "campaign.duration_s",
                "durations must be positive",
            ));
        }
        Ok(())
    }

    pub fn plateaus(&self) -> usize {
        (self.travel_mm / self.step_mm + 1e-9).floor() as usize + 1
    }

    pub fn dwell(&self) -> f64 {
        self.duration_s / self.plateaus() as f64
    }

    /// Plateau index at time `t`.
    pub fn plateau_at(&self, t: f64) -> usize {
        ((t / self.dwell()).floor().max(0.0) as usize).min(self.plateaus() - 1)
    }

    pub fn pose_at(&self, t: f64) -> Pose {
        let mut p = self.position_mm;
        p[self.axis.index()] += self.plateau_at(t) as f64 * self.step_mm;
        Pose::from_mm(p[0], p[1], p[2], Pose::flat_orientation())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperfastSegment {
    pub index: usize,
    pub start_s: f64,
    /// Plateau index, or `None` when the segment straddles a step.
    pub plateau: Option<usize>,
    pub truth_mm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<LocalizationRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outlier: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperfastRun {
    pub n_seg: usize,
    pub nominal_rate_hz: f64,
    pub seed: u64,
    pub segments: Vec<SuperfastSegment>,
    pub failed_segments: usize,
    pub outliers: usize,
    /// Pooled per plateau over segments ending within the window.
    pub sigma_mm: [f64; 3],
    pub sigma_xyz_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperfastReport {
    pub plateaus: usize,
    pub dwell_s: f64,
    pub runs: Vec<SuperfastRun>,
}

pub fn run_superfast_demo(
    env: &Environment,
    c: &SuperfastCampaign,
    opts: RunOptions,
) -> Result<SuperfastReport> {
    c.validate()?;
    let mut osc = env.ctx.oscillator;
    osc.damping = c.damping;
    let ctx = smol_core::solver::FitContext {
        oscillator: osc,
        ..env.ctx.clone()
    };
    let raw = synthesize_trajectory(
        |t| c.pose_at(t),
        &osc,
        &ctx.magnet,
        &ctx.array,
        c.duration_s,
        SynthesisMode::SignalOnly,
    )?;
    let mut runs = Vec::new();
    for (i, &n_seg) in c.n_segs.iter().enumerate() {
        let seed = trial_seed(env.seed, 0x5346 + i as u64, 0);
        let noisy = inject_noise(&raw, &ctx.array, &env.noise.with_seed(seed))?;
        let processed = ctx.chain.process_raw(&noisy, &ctx.array)?;
        let anchor = estimate_phase_anchor(&processed, osc.f_res)?;
        let outcomes = localize_superfast(
            &processed,
            &ctx,
            n_seg,
            &anchor,
            &InitialGuess::ColdStart,
            &env.solver,
            None,
        )?;
        let seg_len = n_seg as f64 / (2.0 * osc.f_res);
        let a = c.axis.index();
        let mut groups = vec![Vec::new(); c.plateaus()];
        let mut segments = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            let end = o.start_time + seg_len;
            let (p0, p1) = (c.plateau_at(o.start_time), c.plateau_at(end - 1e-9));
            let plateau = (p0 == p1).then_some(p0);
            let truth = c.pose_at(o.start_time).position[a] * 1e3;
            let est = o.result.as_ref().map(|r| r.pose.position * 1e3);
            let outlier =
                est.is_some_and(|p| p[a] < c.outlier_bounds_mm[0] || p[a] > c.outlier_bounds_mm[1]);
            if let (Some(p), Some(k)) = (est, plateau) {
                if end <= c.window_s + 1e-12 {
                    groups[k].push(p);
                }
            }
            segments.push(SuperfastSegment {
                index: o.index,
                start_s: o.start_time,
                plateau,
                truth_mm: truth,
                result: o.result.as_ref().map(|r| r.record(opts.timings)),
                error: o.error,
                outlier,
            });
        }
        let sigma = pooled_sigma(&groups);
        runs.push(SuperfastRun {
            n_seg,
            nominal_rate_hz: nominal_rate(osc.f_res, n_seg),
            seed,
            failed_segments: segments.iter().filter(|s| s.result.is_none()).count(),
            outliers: segments.iter().filter(|s| s.outlier).count(),
            segments,
            sigma_mm: sigma,
            sigma_xyz_mm: mean3(&sigma),
        });
    }
    Ok(SuperfastReport {
        plateaus: c.plateaus(),
        dwell_s: c.dwell(),
        runs,
    })
}
