//! Closed-loop gradient actuation of a magnet-carrying robot along a waypoint path,
//! alternating SMOL sensing (actuation off) with timed coil pulses.

mod coils;
mod control;
mod robot;

use std::path::PathBuf;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use smol_core::solver::InitialGuess;

pub use coils::{elliptic_ke, loop_field_local, CoilModel, CoilParams, COILS};
pub use control::{
    actuation_time, coil_currents, coil_pair_ratio, cross2, desired_direction, drive_current,
    heading_change_deg, pair_currents, ControlConfig,
};
pub use robot::{
    flipped, is_upright, pose_heading, step_robot, ForceModel, RobotParams, RobotState,
};

use crate::campaigns::{triage, RunOptions};
use crate::config::{resolve, Environment};
use crate::error::{LabError, Result};
use crate::seed::trial_seed;
use crate::trial::{frame_duration, localize_raw_from, noisy_frame};

/// Waypoints of the bundled R-shaped path (mm, relative to the coil centre).
pub const R_PATH_CSV: &str = include_str!("../../data/r_path.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClosedLoopCampaign {
    /// CSV with `x_mm,y_mm` columns; the bundled R path when absent.
    #[serde(default)]
    pub path_file: Option<PathBuf>,
    /// Half periods per sensing frame.
    #[serde(default = "default_n")]
    pub n: usize,
    /// Excitation plus coil ring-down before each sensing frame (s).
    #[serde(default = "default_excitation")]
    pub excitation_s: f64,
    #[serde(default)]
    pub coils: CoilParams,
    #[serde(default)]
    pub robot: RobotParams,
    #[serde(default)]
    pub control: ControlConfig,
    /// Cycles spent on one waypoint before it is given up as missed.
    #[serde(default = "default_stall")]
    pub max_cycles_per_waypoint: usize,
    /// Extra sensing attempts after a failed localization.
    #[serde(default = "default_retries")]
    pub max_retries: usize,
}

fn default_n() -> usize {
    10
}
fn default_excitation() -> f64 {
    0.08
}
fn default_stall() -> usize {
    200
}
fn default_retries() -> usize {
    3
}

impl Default for ClosedLoopCampaign {
    fn default() -> Self {
        Self {
            path_file: None,
            n: default_n(),
            excitation_s: default_excitation(),
            coils: CoilParams::default(),
            robot: RobotParams::default(),
            control: ControlConfig::default(),
            max_cycles_per_waypoint: default_stall(),
            max_retries: default_retries(),
        }
    }
}

impl ClosedLoopCampaign {
    pub fn validate(&self) -> Result<()> {
        crate::campaigns::check_n(self.n)?;
        if !(self.excitation_s >= 0.0) {
            return Err(LabError::field(
                "campaign.excitation_s",
                "must be non-negative",
            ));
        }
        if self.max_cycles_per_waypoint == 0 {
            return Err(LabError::field(
                "campaign.max_cycles_per_waypoint",
                "must be at least 1",
            ));
        }
        self.coils.validate()?;
        self.robot.validate()?;
        self.control.validate()
    }

    /// Waypoints in mm relative to the coil centre.
    pub fn waypoints(&self, env: &Environment) -> Result<Vec<[f64; 2]>> {
        match &self.path_file {
            None => parse_path(R_PATH_CSV.as_bytes(), "bundled R path"),
            Some(p) => {
                let path = resolve(&env.base_dir, p);
                let f = std::fs::File::open(&path).map_err(|e| LabError::io(&path, e))?;
                parse_path(f, &path.display().to_string())
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct PathRow {
    x_mm: f64,
    y_mm: f64,
}

pub fn parse_path<R: std::io::Read>(r: R, name: &str) -> Result<Vec<[f64; 2]>> {
    let mut out = Vec::new();
    for row in csv::Reader::from_reader(r).deserialize::<PathRow>() {
        let row = row?;
        if !(row.x_mm.is_finite() && row.y_mm.is_finite()) {
            return Err(LabError::Campaign(format!("{name}: non-finite waypoint")));
        }
        out.push([row.x_mm, row.y_mm]);
    }
    if out.len() < 2 {
        return Err(LabError::Campaign(format!(
            "{name}: a path needs at least two waypoints"
        )));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleLog {
    pub cycle: usize,
    /// Simulated time at the end of sensing (s).
    pub time_s: f64,
    /// Index of the waypoint being approached after this sensing.
    pub waypoint: usize,
    pub truth_mm: [f64; 3],
    pub truth_heading_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate_mm: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate_heading_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
    /// In-plane distance between estimate and truth (mm).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_mm: Option<f64>,
    pub attempts: usize,
    pub currents_a: [f64; COILS],
    pub actuation_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedLoopReport {
    pub n: usize,
    /// Targets after the start point.
    pub waypoints: usize,
    pub reached: usize,
    pub missed: usize,
    pub completed: bool,
    pub cycles: usize,
    pub failed_localizations: usize,
    /// Fits replaced by their upright mirror solution.
    pub flipped_fits: usize,
    pub sim_time_s: f64,
    pub rate_hz: f64,
    /// Mean and standard deviation of the in-plane estimate error (mm).
    pub mean_error_mm: f64,
    pub std_error_mm: f64,
    pub log: Vec<CycleLog>,
}

fn mm3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x * 1e3, v.y * 1e3, v.z * 1e3]
}

fn heading_deg(u: &Vector2<f64>) -> f64 {
    u.y.atan2(u.x).to_degrees()
}

/// Runs the sense–decide–act loop until the last waypoint is reached.
pub fn run_closed_loop(
    env: &Environment,
    c: &ClosedLoopCampaign,
    _opts: RunOptions,
) -> Result<ClosedLoopReport> {
    c.validate()?;
    let coils = CoilModel::new(c.coils.clone())?;
    let center = Vector3::from(c.coils.center_mm) * 1e-3;
    let wps: Vec<Vector2<f64>> = c
        .waypoints(env)?
        .iter()
        .map(|p| center.xy() + Vector2::new(p[0], p[1]) * 1e-3)
        .collect();
    for (i, w) in wps.iter().enumerate() {
        if !coils.contains(&Vector3::new(w.x, w.y, center.z)) {
            return Err(LabError::Campaign(format!(
                "waypoint {i} lies outside the coil field map"
            )));
        }
    }
    let first_dir = desired_direction(&wps[0], &wps[1]).unwrap_or_else(Vector2::x);
    let mut robot = RobotState::new(Vector3::new(wps[0].x, wps[0].y, center.z), first_dir);
    let moment = env.ctx.magnet.moment();
    let frame = frame_duration(env.ctx.oscillator.f_res, c.n);

    let mut estimate = None;
    let mut goal = 1;
    let (mut reached, mut missed, mut failed, mut flips) = (0, 0, 0, 0);
    let mut on_goal = 0;
    let mut time = 0.0;
    let mut log = Vec::new();
    let max_cycles = c.max_cycles_per_waypoint * wps.len();
    for cycle in 0..max_cycles {
        let truth = robot.pose();
        let mut fix = None;
        let mut attempts = 0;
        while fix.is_none() && attempts <= c.max_retries {
            let seed = trial_seed(env.seed, cycle as u64, attempts as u64);
            attempts += 1;
            time += c.excitation_s + frame;
            let raw = noisy_frame(env, &truth, frame, seed, None)?;
            // a retry re-excites and starts cold
            let init = match estimate {
                Some(p) if attempts == 1 => InitialGuess::Pose(p),
                _ => InitialGuess::ColdStart,
            };
            fix = triage(localize_raw_from(env, &raw, c.n, &init))?.ok();
            // the robot floats upright; an overturned fit is the mirror solution
            if let Some(r) = fix.as_ref().filter(|r| !is_upright(&r.pose)) {
                let start = InitialGuess::Pose(flipped(&r.pose, env.ctx.oscillator.l0));
                if let Some(m) = triage(localize_raw_from(env, &raw, c.n, &start))?
                    .ok()
                    .filter(|m| is_upright(&m.pose))
                {
                    flips += 1;
                    fix = Some(m);
                }
            }
        }
        let mut entry = CycleLog {
            cycle,
            time_s: time,
            waypoint: goal,
            truth_mm: mm3(&truth.position),
            truth_heading_deg: heading_deg(&robot.heading),
            estimate_mm: None,
            estimate_heading_deg: None,
            r2: None,
            error_mm: None,
            attempts,
            currents_a: [0.0; COILS],
            actuation_s: 0.0,
        };
        let Some(r) = fix else {
            failed += 1;
            on_goal += 1;
            log.push(entry);
            continue;
        };
        estimate = Some(r.pose);
        let p = r.pose.position.xy();
        let u = pose_heading(&r.pose);
        entry.estimate_mm = Some(mm3(&r.pose.position));
        entry.estimate_heading_deg = Some(heading_deg(&u));
        entry.r2 = Some(r.r2);
        entry.error_mm = Some((p - truth.position.xy()).norm() * 1e3);

        // arrival latches: a reached waypoint is never targeted again
        while goal < wps.len() && (wps[goal] - p).norm() <= c.control.arrival_mm * 1e-3 {
            reached += 1;
            goal += 1;
            on_goal = 0;
        }
        if goal < wps.len() && on_goal >= c.max_cycles_per_waypoint {
            missed += 1;
            goal += 1;
            on_goal = 0;
        }
        entry.waypoint = goal;
        if goal >= wps.len() {
            log.push(entry);
            break;
        }
        let Some(d) = desired_direction(&p, &wps[goal]) else {
            log.push(entry);
            continue;
        };
        let i_drive = drive_current((wps[goal] - p).norm(), &c.control);
        let fields = coils.planar_fields(&Vector3::new(p.x, p.y, center.z))?;
        let currents = coil_currents(&fields, &d, i_drive)?;
        let t_act = actuation_time(heading_change_deg(&u, &d), &c.control);
        let steps = (t_act / c.robot.dt_s).ceil().max(1.0) as usize;
        let dt = t_act / steps as f64;
        for _ in 0..steps {
            let b = coils.field(&currents, &robot.position)?;
            let f = match c.robot.force {
                ForceModel::Proxy { newton_per_tesla } => b * newton_per_tesla,
                ForceModel::Gradient => coils.grad_magnitude(&currents, &robot.position)? * moment,
            };
            robot = step_robot(&robot, &b, &f, dt, &c.robot);
        }
        time += t_act;
        entry.currents_a = currents;
        entry.actuation_s = t_act;
        log.push(entry);
        on_goal += 1;
    }
    let errors: Vec<f64> = log.iter().filter_map(|e| e.error_mm).collect();
    let mean = smol_core::metrics::mean(&errors).unwrap_or(f64::NAN);
    let std = smol_core::metrics::stddev(std::slice::from_ref(&errors)).unwrap_or(f64::NAN);
    let cycles = log.len();
    Ok(ClosedLoopReport {
        n: c.n,
        waypoints: wps.len() - 1,
        reached,
        missed,
        completed: goal >= wps.len(),
        cycles,
        failed_localizations: failed,
        flipped_fits: flips,
        sim_time_s: time,
        rate_hz: if time > 0.0 {
            cycles as f64 / time
        } else {
            f64::NAN
        },
        mean_error_mm: mean,
        std_error_mm: std,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_path_parses() {
        let p = parse_path(R_PATH_CSV.as_bytes(), "r").unwrap();
        assert!(p.len() > 20);
        assert!(p.iter().all(|w| w[0].abs() < 30.0 && w[1].abs() < 30.0));
        assert!(parse_path("x_mm,y_mm\n1,2\n".as_bytes(), "one").is_err());
    }
}
