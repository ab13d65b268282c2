//! Six-degree-of-freedom pose recovery from sampled observations.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::lm::{levenberg_marquardt, LeastSquares, LmConfig};
use super::model_obs::{predict_coarse, predict_into, FitContext, Workspace};
use crate::metrics::sse_tss_r2;
use crate::model::{Pose, Quat};
use crate::signal::SampledObservations;
use crate::{Result, SmolError};

/// Coarse seeding grid for localization without a prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColdStartGrid {
    pub pitch: f64,
    pub x: (f64, f64),
    pub y: (f64, f64),
    pub z: (f64, f64),
    /// 6 (one per rest-moment direction) or 24 (all axis-aligned orientations).
    pub orientations: usize,
    /// Best grid candidates refined by the solver.
    pub refine: usize,
}

impl Default for ColdStartGrid {
    fn default() -> Self {
        Self {
            pitch: 0.02,
            x: (-0.06, 0.06),
            y: (-0.06, 0.06),
            z: (0.04, 0.14),
            orientations: 6,
            refine: 4,
        }
    }
}

impl ColdStartGrid {
    fn axis_values(range: (f64, f64), pitch: f64) -> Vec<f64> {
        let n = ((range.1 - range.0) / pitch + 1e-9).floor() as usize;
        (0..=n).map(|i| range.0 + i as f64 * pitch).collect()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        let xs = Self::axis_values(self.x, self.pitch);
        let ys = Self::axis_values(self.y, self.pitch);
        let zs = Self::axis_values(self.z, self.pitch);
        let mut out = Vec::with_capacity(xs.len() * ys.len() * zs.len());
        for &z in &zs {
            for &y in &ys {
                for &x in &xs {
                    out.push(Vector3::new(x, y, z));
                }
            }
        }
        out
    }
}

/// The 24 rotations mapping coordinate axes onto coordinate axes. The first six
/// send the rest moment (intrinsic x) to ±x, ±y, ±z with the cantilever
/// (intrinsic z) in the sensor plane.
pub fn canonical_orientations() -> Vec<Quat> {
    let axes: [Vector3<f64>; 6] = [
        Vector3::x(),
        -Vector3::x(),
        Vector3::y(),
        -Vector3::y(),
        Vector3::z(),
        -Vector3::z(),
    ];
    let to_quat = |moment: Vector3<f64>, cantilever: Vector3<f64>| {
        let m = nalgebra::Matrix3::from_columns(&[moment, cantilever.cross(&moment), cantilever]);
        let q =
            UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(m));
        Quat::new(q.w, q.i, q.j, q.k)
    };
    let mut firsts = Vec::new();
    let mut rest = Vec::new();
    for a in &axes {
        let flat = if a.x.abs() > 0.5 {
            Vector3::y()
        } else {
            Vector3::x()
        };
        for b in &axes {
            if a.dot(b).abs() > 0.5 {
                continue;
            }
            if *b == flat {
                firsts.push(to_quat(*a, *b));
            } else {
                rest.push(to_quat(*a, *b));
            }
        }
    }
    firsts.extend(rest);
    firsts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub lm: LmConfig,
    pub fd_position: f64,
    pub fd_quaternion: f64,
    pub cofit_phase: bool,
    pub cold_start: ColdStartGrid,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lm: LmConfig::default(),
            fd_position: 1e-6,
            fd_quaternion: 1e-6,
            cofit_phase: false,
            cold_start: ColdStartGrid::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.lm.validate()?;
        if !(self.fd_position > 0.0 && self.fd_quaternion > 0.0 && self.cold_start.pitch > 0.0) {
            return Err(SmolError::InvalidParameter {
                name: "solver",
                reason: "steps must be positive".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialGuess {
    Pose(Pose),
    ColdStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub pose: Pose,
    /// Oscillator phase used (or fitted) for this localization.
    pub phi: f64,
    pub sse: f64,
    pub r2: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Start of the sampled window (s).
    pub timestamp: f64,
    pub wall_time: f64,
}

/// One line of a localization log, in interface units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRecord {
    pub timestamp_s: f64,
    pub position_mm: [f64; 3],
    /// Scalar-first unit quaternion.
    pub quaternion: [f64; 4],
    /// Roll, pitch, yaw about the fixed x, y, z axes.
    pub euler_deg: [f64; 3],
    pub phi_deg: f64,
    pub sse: f64,
    pub r2: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_s: Option<f64>,
}

impl LocalizationResult {
    pub fn record(&self, with_timing: bool) -> LocalizationRecord {
        let q = self.pose.orientation.normalized().0;
        let uq = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
        let (r, p, y) = uq.euler_angles();
        let mm = self.pose.position * 1e3;
        LocalizationRecord {
            timestamp_s: self.timestamp,
            position_mm: [mm.x, mm.y, mm.z],
            quaternion: q,
            euler_deg: [r.to_degrees(), p.to_degrees(), y.to_degrees()],
            phi_deg: self.phi.to_degrees(),
            sse: self.sse,
            r2: self.r2,
            iterations: self.iterations,
            converged: self.converged,
            wall_time_s: with_timing.then_some(self.wall_time),
        }
    }
}

struct PoseProblem<'a> {
    ctx: FitContext,
    obs: &'a SampledObservations,
    observed: Vec<f64>,
    ws: Workspace,
    pred: Vec<f64>,
    fd_position: f64,
    fd_quaternion: f64,
    cofit_phase: bool,
}

impl<'a> PoseProblem<'a> {
    fn new(ctx: &FitContext, obs: &'a SampledObservations, cfg: &SolverConfig) -> Self {
        Self {
            ctx: ctx.clone(),
            obs,
            observed: obs.flat_values(),
            ws: Workspace::default(),
            pred: Vec::with_capacity(obs.total_values()),
            fd_position: cfg.fd_position,
            fd_quaternion: cfg.fd_quaternion,
            cofit_phase: cfg.cofit_phase,
        }
    }

    fn sse_at(&mut self, pose: &Pose) -> Result<f64> {
        self.pred.clear();
        predict_into(
            &self.ctx,
            pose,
            &self.obs.sensor_ids,
            &self.obs.times,
            &self.obs.span,
            &mut self.ws,
            &mut self.pred,
        )?;
        Ok(self
            .pred
            .iter()
            .zip(&self.observed)
            .map(|(p, o)| (p - o).powi(2))
            .sum())
    }
}

fn params_of(pose: &Pose, phi: Option<f64>) -> Vec<f64> {
    let q = pose.orientation.0;
    let mut p = vec![
        pose.position.x,
        pose.position.y,
        pose.position.z,
        q[0],
        q[1],
        q[2],
        q[3],
    ];
    p.extend(phi);
    p
}

fn pose_of(p: &[f64]) -> Pose {
    Pose::new(
        Vector3::new(p[0], p[1], p[2]),
        Quat::new(p[3], p[4], p[5], p[6]),
    )
}

impl LeastSquares for PoseProblem<'_> {
    fn residuals(&mut self, p: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if self.cofit_phase {
            self.ctx.oscillator.phi = p[7];
        }
        out.clear();
        predict_into(
            &self.ctx,
            &pose_of(p),
            &self.obs.sensor_ids,
            &self.obs.times,
            &self.obs.span,
            &mut self.ws,
            out,
        )?;
        for (r, o) in out.iter_mut().zip(&self.observed) {
            *r -= o;
        }
        Ok(())
    }

    fn steps(&self, p: &[f64]) -> Vec<f64> {
        let mut s = vec![self.fd_position; 3];
        s.extend([self.fd_quaternion; 4]);
        if p.len() > 7 {
            s.push(1e-6);
        }
        s
    }

    fn project(&self, p: &mut [f64]) {
        let n = (p[3] * p[3] + p[4] * p[4] + p[5] * p[5] + p[6] * p[6]).sqrt();
        if n > 0.0 {
            for v in &mut p[3..7] {
                *v /= n;
            }
        }
    }
}

fn check_signal(obs: &SampledObservations) -> Result<()> {
    if obs.values.iter().flatten().all(|v| v.abs() <= 1e-15) {
        return Err(SmolError::NoSignal("all observations are zero".into()));
    }
    Ok(())
}

/// Pooled R² of the prediction at `pose` against all observed values.
pub fn fit_r2(observed: &[f64], predicted: &[f64]) -> f64 {
    sse_tss_r2(observed, predicted)
        .map(|q| q.r2)
        .unwrap_or(f64::NAN)
}

/// Candidate poses ranked by coarse SSE over the cold-start grid, for both phase branches.
fn grid_seeds(
    ctx: &FitContext,
    obs: &SampledObservations,
    cfg: &SolverConfig,
) -> Result<Vec<(f64, Pose, f64)>> {
    let orients: Vec<Quat> = canonical_orientations()
        .into_iter()
        .take(cfg.cold_start.orientations.clamp(1, 24))
        .collect();
    let observed = obs.flat_values();
    let mut pred = Vec::with_capacity(observed.len());
    let mut scored = Vec::new();
    for phi in [ctx.oscillator.phi, ctx.oscillator.phi + PI] {
        let c = ctx.with_phase(phi);
        for pos in cfg.cold_start.positions() {
            for q in &orients {
                let pose = Pose::new(pos, *q);
                pred.clear();
                match predict_coarse(&c, &pose, &obs.sensor_ids, &obs.times, &mut pred) {
                    Ok(()) => {
                        let s: f64 = pred
                            .iter()
                            .zip(&observed)
                            .map(|(p, o)| (p - o).powi(2))
                            .sum();
                        scored.push((s, pose, phi));
                    }
                    Err(SmolError::Singularity { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
        }
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored.truncate(cfg.cold_start.refine.max(1));
    Ok(scored)
}

/// The pose that nearly reproduces the same signal: turned half a revolution
/// about the rest moment, with the pivot moved so the magnet stays in place and
/// the phase shifted by π.
pub fn mirror_candidate(pose: &Pose, phi: f64, l0: f64) -> (Pose, f64) {
    let ez = pose.rotation_matrix().column(2).into_owned();
    let flipped = pose
        .orientation
        .mul(&Quat::new(0.0, 1.0, 0.0, 0.0))
        .normalized();
    (
        Pose::new(pose.position + ez * (2.0 * l0), flipped),
        phi + PI,
    )
}

fn refine(
    ctx: &FitContext,
    obs: &SampledObservations,
    cfg: &SolverConfig,
    pose: Pose,
    phi: f64,
) -> Result<(Pose, f64, f64, usize, bool)> {
    let mut prob = PoseProblem::new(&ctx.with_phase(phi), obs, cfg);
    let x0 = params_of(&pose, cfg.cofit_phase.then_some(phi));
    let out = levenberg_marquardt(&mut prob, &x0, &cfg.lm)?;
    let fitted = pose_of(&out.params);
    let phi = if cfg.cofit_phase { out.params[7] } else { phi };
    Ok((fitted, phi, out.sse, out.iterations, out.converged))
}

/// Fits position and quaternion (and optionally the phase) to `obs`.
///
/// `ctx.oscillator.phi` is the phase estimate; the branch `phi + π` is also
/// considered because the anchor only fixes the phase modulo π.
pub fn localize(
    obs: &SampledObservations,
    ctx: &FitContext,
    init: &InitialGuess,
    cfg: &SolverConfig,
) -> Result<LocalizationResult> {
    cfg.validate()?;
    check_signal(obs)?;
    let started = Instant::now();
    let seeds: Vec<(Pose, f64)> = match init {
        InitialGuess::Pose(p) => {
            let mut best: Option<(f64, f64)> = None;
            for phi in [ctx.oscillator.phi, ctx.oscillator.phi + PI] {
                let s = PoseProblem::new(&ctx.with_phase(phi), obs, cfg).sse_at(p)?;
                if best.is_none_or(|(b, _)| s < b) {
                    best = Some((s, phi));
                }
            }
            vec![(*p, best.unwrap().1)]
        }
        InitialGuess::ColdStart => grid_seeds(ctx, obs, cfg)?
            .into_iter()
            .map(|(_, p, phi)| (p, phi))
            .collect(),
    };
    let mut best: Option<(Pose, f64, f64, usize, bool)> = None;
    let mut total_iterations = 0;
    let mut consider = |r: Result<(Pose, f64, f64, usize, bool)>,
                        best: &mut Option<(Pose, f64, f64, usize, bool)>|
     -> Result<()> {
        let r = match r {
            Ok(r) => r,
            Err(SmolError::Singularity { .. }) => return Ok(()),
            Err(e) => return Err(e),
        };
        total_iterations += r.3;
        if best.as_ref().is_none_or(|b| r.2 < b.2) {
            *best = Some(r);
        }
        Ok(())
    };
    let cold = matches!(init, InitialGuess::ColdStart);
    for (pose, phi) in seeds {
        consider(refine(ctx, obs, cfg, pose, phi), &mut best)?;
        if cold {
            if let Some(b) = best {
                let (mp, mphi) = mirror_candidate(&b.0, b.1, ctx.oscillator.l0);
                consider(refine(ctx, obs, cfg, mp, mphi), &mut best)?;
            }
        }
    }
    let (pose, phi, sse, _, converged) =
        best.ok_or_else(|| SmolError::NoSignal("no seed produced a valid prediction".into()))?;
    let mut pose = pose;
    pose.orientation = pose.orientation.normalized();
    let mut prob = PoseProblem::new(&ctx.with_phase(phi), obs, cfg);
    prob.sse_at(&pose)?;
    let r2 = fit_r2(&prob.observed, &prob.pred);
    Ok(LocalizationResult {
        pose,
        phi: phi.rem_euclid(2.0 * PI),
        sse,
        r2,
        iterations: total_iterations,
        converged,
        timestamp: obs.anchor,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// SSE of the prediction at `pose` with the phase in `ctx`.
pub fn sse_at(obs: &SampledObservations, ctx: &FitContext, pose: &Pose) -> Result<f64> {
    PoseProblem::new(ctx, obs, &SolverConfig::default()).sse_at(pose)
}

/// Residual vector (prediction minus observation) at `pose`.
pub fn residuals_at(obs: &SampledObservations, ctx: &FitContext, pose: &Pose) -> Result<Vec<f64>> {
    let mut prob = PoseProblem::new(ctx, obs, &SolverConfig::default());
    let mut out = Vec::new();
    prob.residuals(&params_of(pose, None), &mut out)?;
    Ok(out)
}
