//! Single-frame commands: synthesize a frame, localize it, calibrate from it.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use smol_core::model::{Pose, Quat, SignalFrame};
use smol_core::signal::{downsample_half_periods, estimate_phase_anchor, FilterChain};
use smol_core::solver::{
    calibrate, localize, CalibrationResult, FitContext, InitialGuess, SolverConfig,
};
use smol_lab::config::{ArrayConfig, DeviceConfig, Environment, NoiseConfig, Setup};
use smol_lab::report::{json_lines, write_file};
use smol_lab::trial::{frame_duration, localize_raw_from, noisy_frame};
use smol_lab::LabError;

fn default_n() -> usize {
    2
}

fn default_seed() -> u64 {
    1
}

/// Device pose in interface units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoseConfig {
    pub position_mm: [f64; 3],
    /// Intrinsic rotations of the flat device about x, then y, then z.
    pub rotation_deg: [f64; 3],
}

impl Default for PoseConfig {
    fn default() -> Self {
        Self {
            position_mm: [0.0, 0.0, 80.0],
            rotation_deg: [0.0; 3],
        }
    }
}

impl PoseConfig {
    pub fn pose(&self) -> Pose {
        let [x, y, z] = self.position_mm;
        let r = self.rotation_deg;
        let q = Quat::from_axis_angle(&nalgebra::Vector3::x(), r[0].to_radians())
            .mul(&Quat::from_axis_angle(
                &nalgebra::Vector3::y(),
                r[1].to_radians(),
            ))
            .mul(&Quat::from_axis_angle(
                &nalgebra::Vector3::z(),
                r[2].to_radians(),
            ));
        Pose::from_mm(x, y, z, Pose::flat_orientation()).with_intrinsic_rotation(&q)
    }
}

/// Config shared by `simulate`, `localize` and `calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Half periods per localization.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Simulated device pose (`simulate` only).
    #[serde(default)]
    pub pose: PoseConfig,
    /// Known sensor-plane distance of the device during calibration.
    #[serde(default)]
    pub known_z_mm: Option<f64>,
    #[serde(default)]
    pub device: DeviceConfig,
    #[serde(default)]
    pub array: ArrayConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub filter: FilterChain,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl FrameConfig {
    pub fn validate(&self) -> smol_lab::Result<()> {
        if self.n == 0 {
            return Err(LabError::field("n", "at least one half period"));
        }
        if let Some(z) = self.known_z_mm {
            if !(z > 0.0) {
                return Err(LabError::field("known_z_mm", "must be positive"));
            }
        }
        if !self
            .pose
            .position_mm
            .iter()
            .chain(&self.pose.rotation_deg)
            .all(|v| v.is_finite())
        {
            return Err(LabError::field("pose", "must be finite"));
        }
        self.device.oscillator()?;
        self.device.magnet()?;
        Ok(())
    }

    pub fn environment(&self, base: &Path) -> smol_lab::Result<Environment> {
        let setup = Setup {
            device: self.device.clone(),
            array: self.array.clone(),
            noise: self.noise.clone(),
            filter: self.filter,
            solver: self.solver.clone(),
        };
        setup.environment(self.seed, 1, base)
    }
}

#[derive(Debug, Serialize)]
struct Truth {
    position_mm: [f64; 3],
    quaternion: [f64; 4],
    n: usize,
    seed: u64,
}

/// Writes the noisy raw frame of a static device and its ground truth.
pub fn simulate(cfg: &FrameConfig, base: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let env = cfg.environment(base)?;
    let truth = cfg.pose.pose();
    let duration = frame_duration(env.ctx.oscillator.f_res, cfg.n);
    let raw = noisy_frame(&env, &truth, duration, cfg.seed, None)?;
    let mut csv = Vec::new();
    raw.write_csv(&mut csv)?;
    let mm = truth.position * 1e3;
    let t = Truth {
        position_mm: [mm.x, mm.y, mm.z],
        quaternion: truth.orientation.0,
        n: cfg.n,
        seed: cfg.seed,
    };
    Ok(vec![
        write_file(&out.join("frame.csv"), &csv)?,
        write_file(&out.join("truth.json"), &serde_json::to_vec_pretty(&t)?)?,
    ])
}

pub fn read_frame(path: &Path) -> Result<SignalFrame> {
    let f =
        std::fs::File::open(path).with_context(|| format!("opening frame {}", path.display()))?;
    SignalFrame::read_csv(f).with_context(|| format!("reading frame {}", path.display()))
}

fn check_channels(frame: &SignalFrame, env: &Environment) -> Result<()> {
    let sensors = env.ctx.array.sensors.len();
    if let Some(id) = frame.sensor_ids.iter().find(|&&id| id >= sensors) {
        bail!("frame has a channel for sensor {id} but the array has {sensors} sensors");
    }
    Ok(())
}

/// Localizes a recorded raw frame from a cold start.
pub fn localize_frame(
    cfg: &FrameConfig,
    base: &Path,
    frame: &Path,
    out: &Path,
    timings: bool,
) -> Result<Vec<PathBuf>> {
    if !cfg.device.calibrated {
        return Err(LabError::Uncalibrated.into());
    }
    let env = cfg.environment(base)?;
    let raw = read_frame(frame)?;
    check_channels(&raw, &env)?;
    let r = localize_raw_from(&env, &raw, cfg.n, &InitialGuess::ColdStart)?;
    let rec = r.record(timings);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(Summary::from(&rec))?;
    Ok(vec![
        write_file(
            &out.join("localize.jsonl"),
            json_lines(std::slice::from_ref(&rec))?.as_bytes(),
        )?,
        write_file(&out.join("localize_summary.csv"), &w.into_inner()?)?,
    ])
}

#[derive(Debug, Serialize)]
struct Summary {
    x_mm: f64,
    y_mm: f64,
    z_mm: f64,
    roll_deg: f64,
    pitch_deg: f64,
    yaw_deg: f64,
    r2: f64,
    converged: bool,
}

impl From<&smol_core::solver::LocalizationRecord> for Summary {
    fn from(r: &smol_core::solver::LocalizationRecord) -> Self {
        let [x_mm, y_mm, z_mm] = r.position_mm;
        let [roll_deg, pitch_deg, yaw_deg] = r.euler_deg;
        Self {
            x_mm,
            y_mm,
            z_mm,
            roll_deg,
            pitch_deg,
            yaw_deg,
            r2: r.r2,
            converged: r.converged,
        }
    }
}

#[derive(Debug, Serialize)]
struct CalibrationOutput {
    theta_max_deg: f64,
    eta_per_s: f64,
    phi_deg: f64,
    position_mm: [f64; 3],
    quaternion: [f64; 4],
    r2: f64,
    iterations: usize,
    converged: bool,
}

/// Fits θ_max and η with the device at a known depth and writes an updated device file.
pub fn calibrate_frame(
    cfg: &FrameConfig,
    base: &Path,
    frame: &Path,
    known_z_mm: Option<f64>,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let z_mm = known_z_mm.or(cfg.known_z_mm).ok_or_else(|| {
        anyhow::anyhow!("calibration needs the device depth: set `known_z_mm` in the config or pass --known-z-mm")
    })?;
    if !(z_mm > 0.0) {
        bail!("--known-z-mm must be positive");
    }
    let env = cfg.environment(base)?;
    let raw = read_frame(frame)?;
    check_channels(&raw, &env)?;
    let ctx: &FitContext = &env.ctx;
    let processed = ctx.chain.process_raw(&raw, &ctx.array)?;
    let anchor = estimate_phase_anchor(&processed, ctx.oscillator.f_res)?;
    let obs = downsample_half_periods(&processed, ctx.oscillator.f_res, cfg.n, anchor.anchor_time)?;
    let phase_ctx = ctx.with_phase(anchor.phi);
    // the uncalibrated amplitude biases depth but leaves the orientation usable as a start
    let start = localize(&obs, &phase_ctx, &InitialGuess::ColdStart, &env.solver)?;
    let init = Pose::new(
        nalgebra::Vector3::new(start.pose.position.x, start.pose.position.y, z_mm * 1e-3),
        start.pose.orientation,
    );
    let c: CalibrationResult = calibrate(
        std::slice::from_ref(&obs),
        &phase_ctx,
        Some(z_mm * 1e-3),
        &init,
        &env.solver,
    )?;

    let mut device = cfg.device.clone();
    device.theta_max_deg = c.theta_max.to_degrees();
    device.eta_per_s = c.eta;
    device.calibrated = true;
    let mm = c.pose.position * 1e3;
    let report = CalibrationOutput {
        theta_max_deg: device.theta_max_deg,
        eta_per_s: c.eta,
        phi_deg: c.phi.to_degrees(),
        position_mm: [mm.x, mm.y, mm.z],
        quaternion: c.pose.orientation.0,
        r2: c.r2,
        iterations: c.iterations,
        converged: c.converged,
    };
    Ok(vec![
        write_file(
            &out.join("device.toml"),
            toml::to_string(&device)?.as_bytes(),
        )?,
        write_file(
            &out.join("calibration.json"),
            &serde_json::to_vec_pretty(&report)?,
        )?,
    ])
}
