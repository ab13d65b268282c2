//! One simulated localization: synthesize, corrupt, filter, sample, fit.

use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use smol_core::model::{synthesize_signal, Pose, Quat, SignalFrame, SynthesisMode};
use smol_core::signal::{downsample_half_periods, estimate_phase_anchor, inject_noise};
use smol_core::solver::{localize, InitialGuess, LocalizationRecord, LocalizationResult};

use crate::config::Environment;
use crate::error::Result;
use crate::seed::splitmix64;

/// Lead-in before the sampled window: filter edges plus the phase estimate's quarter-period skip.
pub const LEAD_IN: f64 = 0.005;

/// Warm starts begin this far from the truth.
pub const WARM_OFFSET: f64 = 2e-3;
pub const WARM_ANGLE_DEG: f64 = 5.0;

/// Below this R² the warm-started fit is discarded and a cold start is run.
pub const COLD_FALLBACK_R2: f64 = 0.9;

/// Frame length needed for `n` half periods.
pub fn frame_duration(f_res: f64, n: usize) -> f64 {
    LEAD_IN + (n + 2) as f64 / (2.0 * f_res) + LEAD_IN
}

/// Extra field added to a clean frame before digitization.
pub type Disturbance<'a> = &'a dyn Fn(&mut SignalFrame) -> Result<()>;

/// Noisy raw frame of a static device. `disturb` adds external fields before digitization.
pub fn noisy_frame(
    env: &Environment,
    truth: &Pose,
    duration: f64,
    seed: u64,
    disturb: Option<Disturbance>,
) -> Result<SignalFrame> {
    let ctx = &env.ctx;
    let mut raw = synthesize_signal(
        truth,
        &ctx.oscillator,
        &ctx.magnet,
        &ctx.array,
        duration,
        SynthesisMode::SignalOnly,
    )?;
    if let Some(d) = disturb {
        d(&mut raw)?;
    }
    Ok(inject_noise(&raw, &ctx.array, &env.noise.with_seed(seed))?)
}

/// Start pose at a fixed distance and angle from `truth` in a seeded random direction.
pub fn perturbed(truth: &Pose, seed: u64) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x5741_524D));
    let mut unit = || loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            break v / n;
        }
    };
    let dp = unit() * WARM_OFFSET;
    let axis = unit();
    let q = Quat::from_axis_angle(&axis, WARM_ANGLE_DEG.to_radians());
    Pose::new(truth.position + dp, truth.orientation.mul(&q).normalized())
}

/// Filters `raw`, samples `n` half periods after the phase anchor and fits the pose.
pub fn localize_raw(
    env: &Environment,
    raw: &SignalFrame,
    n: usize,
    start: &Pose,
) -> Result<LocalizationResult> {
    localize_raw_from(env, raw, n, &InitialGuess::Pose(*start))
}

/// As [`localize_raw`], from any initial guess. A warm start that fits poorly is retried cold.
pub fn localize_raw_from(
    env: &Environment,
    raw: &SignalFrame,
    n: usize,
    init: &InitialGuess,
) -> Result<LocalizationResult> {
    let ctx = &env.ctx;
    let t0 = Instant::now();
    let processed = ctx.chain.process_raw(raw, &ctx.array)?;
    let anchor = estimate_phase_anchor(&processed, ctx.oscillator.f_res)?;
    let obs = downsample_half_periods(&processed, ctx.oscillator.f_res, n, anchor.anchor_time)?;
    let phase_ctx = ctx.with_phase(anchor.phi);
    let mut r = localize(&obs, &phase_ctx, init, &env.solver)?;
    if r.r2 < COLD_FALLBACK_R2 && !matches!(init, InitialGuess::ColdStart) {
        let cold = localize(&obs, &phase_ctx, &InitialGuess::ColdStart, &env.solver)?;
        if cold.sse < r.sse {
            r = cold;
        }
    }
    r.wall_time = t0.elapsed().as_secs_f64();
    Ok(r)
}

/// Static-device trial at `truth` with `n` half periods.
pub fn run_trial(
    env: &Environment,
    truth: &Pose,
    n: usize,
    seed: u64,
) -> Result<LocalizationResult> {
    let raw = noisy_frame(
        env,
        truth,
        frame_duration(env.ctx.oscillator.f_res, n),
        seed,
        None,
    )?;
    localize_raw(env, &raw, n, &perturbed(truth, seed))
}

/// Stored outcome of one trial; every aggregate in a report is computed from these rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub point: usize,
    pub repeat: usize,
    pub seed: u64,
    pub truth_mm: [f64; 3],
    pub truth_quaternion: [f64; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<LocalizationRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrialRow {
    pub fn new(
        point: usize,
        repeat: usize,
        seed: u64,
        truth: &Pose,
        outcome: &Result<LocalizationResult>,
        timings: bool,
    ) -> Self {
        let mm = truth.position * 1e3;
        let (result, error) = match outcome {
            Ok(r) => (Some(r.record(timings)), None),
            Err(e) => (None, Some(e.to_string())),
        };
        Self {
            point,
            repeat,
            seed,
            truth_mm: [mm.x, mm.y, mm.z],
            truth_quaternion: truth.orientation.0,
            result,
            error,
        }
    }

    pub fn ok(&self) -> bool {
        self.result.is_some()
    }
}
