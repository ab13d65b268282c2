//! Joint fit of oscillator amplitude, damping and phase with the device at a known depth.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use super::lm::{jacobian, levenberg_marquardt, LeastSquares};
use super::localize::{fit_r2, SolverConfig};
use super::model_obs::{predict_into, FitContext, Workspace};
use crate::model::{Pose, Quat};
use crate::signal::SampledObservations;
use crate::{Result, SmolError};

/// Variance inflation of the amplitude estimate caused by its correlation with
/// depth, at and above which the joint problem is reported as not identifiable.
pub const VIF_LIMIT: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub theta_max: f64,
    pub eta: f64,
    pub phi: f64,
    pub pose: Pose,
    pub sse: f64,
    pub r2: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct CalibrationProblem<'a> {
    ctx: FitContext,
    obs: &'a [SampledObservations],
    observed: Vec<f64>,
    z: f64,
    ws: Workspace,
}

// parameters: x, y, q0..q3, theta_max, eta, phi
impl CalibrationProblem<'_> {
    fn apply(&mut self, p: &[f64]) -> Pose {
        self.ctx.oscillator.theta_max = p[6];
        self.ctx.oscillator.eta = p[7];
        self.ctx.oscillator.phi = p[8];
        Pose::new(
            Vector3::new(p[0], p[1], self.z),
            Quat::new(p[2], p[3], p[4], p[5]),
        )
    }
}

impl LeastSquares for CalibrationProblem<'_> {
    fn residuals(&mut self, p: &[f64], out: &mut Vec<f64>) -> Result<()> {
        let pose = self.apply(p);
        out.clear();
        for o in self.obs {
            predict_into(
                &self.ctx,
                &pose,
                &o.sensor_ids,
                &o.times,
                &o.span,
                &mut self.ws,
                out,
            )?;
        }
        for (r, v) in out.iter_mut().zip(&self.observed) {
            *r -= v;
        }
        Ok(())
    }

    fn steps(&self, _p: &[f64]) -> Vec<f64> {
        vec![1e-6, 1e-6, 1e-6, 1e-6, 1e-6, 1e-6, 1e-6, 1e-4, 1e-6]
    }

    fn project(&self, p: &mut [f64]) {
        let n = p[2..6].iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            for v in &mut p[2..6] {
                *v /= n;
            }
        }
        p[6] = p[6].clamp(1e-4, FRAC_PI_2 - 1e-4);
        p[7] = p[7].max(0.0);
    }
}

/// Fits θ_max, η and φ together with the in-plane position and orientation,
/// holding the depth at `known_z`.
///
/// `ctx` supplies the starting values and the damping law; `init` the starting pose.
pub fn calibrate(
    obs: &[SampledObservations],
    ctx: &FitContext,
    known_z: Option<f64>,
    init: &Pose,
    cfg: &SolverConfig,
) -> Result<CalibrationResult> {
    let z = known_z.ok_or(SmolError::MissingKnownDepth)?;
    if obs.is_empty() {
        return Err(SmolError::Empty(
            "calibration needs at least one observation window",
        ));
    }
    let observed: Vec<f64> = obs
        .iter()
        .flat_map(|o| o.values.iter().flatten().copied())
        .collect();
    if observed.iter().all(|v| v.abs() <= 1e-15) {
        return Err(SmolError::NoSignal(
            "all calibration observations are zero".into(),
        ));
    }
    let mut prob = CalibrationProblem {
        ctx: ctx.clone(),
        obs,
        observed,
        z,
        ws: Workspace::default(),
    };
    let q = init.orientation.0;
    let o = &ctx.oscillator;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut r = Vec::new();
    for phi in [o.phi, o.phi + PI] {
        let x0 = vec![
            init.position.x,
            init.position.y,
            q[0],
            q[1],
            q[2],
            q[3],
            o.theta_max,
            o.eta,
            phi,
        ];
        prob.residuals(&x0, &mut r)?;
        let s: f64 = r.iter().map(|v| v * v).sum();
        if best.as_ref().is_none_or(|b| s < b.0) {
            best = Some((s, x0));
        }
    }
    let x0 = best.unwrap().1;
    let out = levenberg_marquardt(&mut prob, &x0, &cfg.lm)?;
    let p = &out.params;
    prob.residuals(p, &mut r)?;
    let predicted: Vec<f64> = r.iter().zip(&prob.observed).map(|(a, b)| a + b).collect();
    let r2 = fit_r2(&prob.observed, &predicted);
    let pose = prob.apply(p);
    Ok(CalibrationResult {
        theta_max: p[6],
        eta: p[7],
        phi: p[8].rem_euclid(2.0 * PI),
        pose: Pose::new(pose.position, pose.orientation.normalized()),
        sse: out.sse,
        r2,
        iterations: out.iterations,
        converged: out.converged,
    })
}

/// Local identifiability of the joint problem with depth left free.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Identifiability {
    /// Correlation of the θ_max and z estimates from the inverse normal matrix.
    pub theta_z_correlation: f64,
    /// `1 / (1 − ρ²)` for the θ_max–z pair.
    pub variance_inflation: f64,
    pub identifiable: bool,
}

struct JointProblem<'a> {
    ctx: FitContext,
    obs: &'a [SampledObservations],
    observed: Vec<f64>,
    base: Quat,
    ws: Workspace,
}

// parameters: x, y, z, rotation vector (3), theta_max, eta, phi
impl LeastSquares for JointProblem<'_> {
    fn residuals(&mut self, p: &[f64], out: &mut Vec<f64>) -> Result<()> {
        self.ctx.oscillator.theta_max = p[6];
        self.ctx.oscillator.eta = p[7];
        self.ctx.oscillator.phi = p[8];
        let dq = Quat::from_rotation_vector(&Vector3::new(p[3], p[4], p[5]));
        let pose = Pose::new(Vector3::new(p[0], p[1], p[2]), self.base.mul(&dq));
        out.clear();
        for o in self.obs {
            predict_into(
                &self.ctx,
                &pose,
                &o.sensor_ids,
                &o.times,
                &o.span,
                &mut self.ws,
                out,
            )?;
        }
        for (r, v) in out.iter_mut().zip(&self.observed) {
            *r -= v;
        }
        Ok(())
    }

    fn steps(&self, _p: &[f64]) -> Vec<f64> {
        vec![1e-6, 1e-6, 1e-6, 1e-6, 1e-6, 1e-6, 1e-6, 1e-4, 1e-6]
    }
}

/// Evaluates whether amplitude and depth can be separated at `pose` when both are free.
pub fn joint_identifiability(
    obs: &[SampledObservations],
    ctx: &FitContext,
    pose: &Pose,
) -> Result<Identifiability> {
    let observed: Vec<f64> = obs
        .iter()
        .flat_map(|o| o.values.iter().flatten().copied())
        .collect();
    let mut prob = JointProblem {
        ctx: ctx.clone(),
        obs,
        observed,
        base: pose.orientation.normalized(),
        ws: Workspace::default(),
    };
    let o = &ctx.oscillator;
    let x = [
        pose.position.x,
        pose.position.y,
        pose.position.z,
        0.0,
        0.0,
        0.0,
        o.theta_max,
        o.eta,
        o.phi,
    ];
    let mut r0 = Vec::new();
    prob.residuals(&x, &mut r0)?;
    let j = jacobian(&mut prob, &x, &r0)?;
    // column scaling keeps the normal matrix well conditioned before inversion
    let norms: Vec<f64> = (0..j.ncols())
        .map(|c| j.column(c).norm().max(1e-300))
        .collect();
    let js = DMatrix::from_fn(j.nrows(), j.ncols(), |r, c| j[(r, c)] / norms[c]);
    let cov = (js.transpose() * &js)
        .try_inverse()
        .ok_or_else(|| SmolError::InsufficientSpan("singular normal matrix".into()))?;
    let corr = cov[(6, 2)] / (cov[(6, 6)] * cov[(2, 2)]).sqrt();
    let vif = 1.0 / (1.0 - corr * corr).max(f64::MIN_POSITIVE);
    Ok(Identifiability {
        theta_z_correlation: corr,
        variance_inflation: vif,
        identifiable: vif < VIF_LIMIT,
    })
}
