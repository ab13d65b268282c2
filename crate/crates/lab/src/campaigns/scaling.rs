//! Maximum localization depth versus magnet size.

use serde::{Deserialize, Serialize};
use smol_core::metrics::{linear_fit, LinearFit};
use smol_core::model::{MagnetSpec, Pose};

use super::sweep::check_n;
use super::{mean3, pooled_sigma, positions, rows, run_jobs, Job, RunOptions};
use crate::config::Environment;
use crate::error::{LabError, Result};
use crate::trial::TrialRow;

fn default_sides() -> Vec<f64> {
    vec![0.5, 0.7, 0.9226, 1.2, 1.5]
}

fn default_n() -> usize {
    2
}

fn default_z_lo() -> f64 {
    40.0
}

fn default_z_hi() -> f64 {
    250.0
}

fn default_resolution() -> f64 {
    5.0
}

fn default_criterion() -> f64 {
    1.0
}

/// Device variant probed after the size series, with its own oscillator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizedDevice {
    pub theta_max_deg: f64,
    pub f_res_hz: f64,
    pub n: usize,
}

impl Default for OptimizedDevice {
    fn default() -> Self {
        Self {
            theta_max_deg: 30.0,
            f_res_hz: 160.0,
            n: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingCampaign {
    /// Cube side lengths (mm); the moment scales with a³.
    #[serde(default = "default_sides")]
    pub sides_mm: Vec<f64>,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_z_lo")]
    pub z_min_mm: f64,
    #[serde(default = "default_z_hi")]
    pub z_max_search_mm: f64,
    #[serde(default = "default_resolution")]
    pub resolution_mm: f64,
    /// Mean of σ_x, σ_y, σ_z that a depth must stay below (mm).
    #[serde(default = "default_criterion")]
    pub criterion_mm: f64,
    /// Scale the array pitch and extent by a / a_device for magnets larger than the device.
    #[serde(default = "default_true")]
    pub scale_array: bool,
    #[serde(default)]
    pub optimized: Option<OptimizedDevice>,
}

fn default_true() -> bool {
    true
}

impl Default for ScalingCampaign {
    fn default() -> Self {
        Self {
            sides_mm: default_sides(),
            n: default_n(),
            z_min_mm: default_z_lo(),
            z_max_search_mm: default_z_hi(),
            resolution_mm: default_resolution(),
            criterion_mm: default_criterion(),
            scale_array: true,
            optimized: None,
        }
    }
}

impl ScalingCampaign {
    pub fn validate(&self) -> Result<()> {
        if self.sides_mm.is_empty() || self.sides_mm.iter().any(|a| !(*a > 0.0)) {
            return Err(LabError::field(
                "campaign.sides_mm",
                "needs positive side lengths",
            ));
        }
        check_n(self.n)?;
        if !(self.resolution_mm > 0.0)
            || !(self.z_max_search_mm > self.z_min_mm)
            || !(self.z_min_mm > 0.0)
        {
            return Err(LabError::field(
                "campaign.z_min_mm",
                "needs 0 < z_min_mm < z_max_search_mm and a positive resolution",
            ));
        }
        if !(self.criterion_mm > 0.0) {
            return Err(LabError::field("campaign.criterion_mm", "must be positive"));
        }
        if let Some(o) = &self.optimized {
            check_n(o.n)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZProbe {
    pub z_mm: f64,
    pub sigma_xyz_mm: f64,
    pub failed: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub side_mm: f64,
    pub array_scale: f64,
    pub z_max_mm: f64,
    pub probes: Vec<ZProbe>,
    /// Set when the criterion fails at the shallowest depth or holds at the deepest.
    pub flag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// z_max (mm) against side (mm), over rows without a flag.
    pub fit: Option<LinearFit>,
    pub optimized: Option<ScalingRow>,
    /// Array scaling rule, recorded for reproducibility.
    pub array_scaling: String,
    pub trials: Vec<TrialRow>,
}

struct Search<'a> {
    env: &'a Environment,
    c: &'a ScalingCampaign,
    n: usize,
    series: u64,
    trials: Vec<TrialRow>,
    opts: RunOptions,
}

impl Search<'_> {
    fn probe(&mut self, k: usize) -> Result<ZProbe> {
        let z = self.c.z_min_mm + k as f64 * self.c.resolution_mm;
        let truth = Pose::from_mm(0.0, 0.0, z, Pose::flat_orientation());
        let point = self.series * 10_000 + k as u64;
        let jobs: Vec<Job> = (0..self.env.repeats)
            .map(|r| Job::new(self.env, point as usize, point, r, truth, self.n))
            .collect();
        let outcomes = run_jobs(self.env, &jobs)?;
        let g = positions(&outcomes);
        let failed = self.env.repeats - g.len();
        let s = mean3(&pooled_sigma(std::slice::from_ref(&g)));
        self.trials.extend(rows(&jobs, &outcomes, self.opts));
        Ok(ZProbe {
            z_mm: z,
            sigma_xyz_mm: s,
            failed,
            pass: failed == 0 && s < self.c.criterion_mm,
        })
    }

    /// Largest grid depth meeting the criterion, assuming σ grows with depth.
    fn z_max(&mut self) -> Result<(f64, Vec<ZProbe>, Option<String>)> {
        let c = self.c;
        let top = ((c.z_max_search_mm - c.z_min_mm) / c.resolution_mm + 1e-9).floor() as usize;
        let mut probes = Vec::new();
        let first = self.probe(0)?;
        probes.push(first.clone());
        if !first.pass {
            return Ok((
                0.0,
                probes,
                Some(format!("criterion not met at {} mm", c.z_min_mm)),
            ));
        }
        let last = self.probe(top)?;
        probes.push(last.clone());
        if last.pass {
            return Ok((
                last.z_mm,
                probes,
                Some(format!(
                    "criterion still met at search limit {} mm",
                    last.z_mm
                )),
            ));
        }
        let (mut lo, mut hi) = (0usize, top);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            let p = self.probe(mid)?;
            let pass = p.pass;
            probes.push(p);
            if pass {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        probes.sort_by(|a, b| a.z_mm.total_cmp(&b.z_mm));
        Ok((c.z_min_mm + lo as f64 * c.resolution_mm, probes, None))
    }
}

/// Array scale for a cube of side `a` against the device's equivalent cube side.
pub fn array_scale(a: f64, device_side: f64, enabled: bool) -> f64 {
    if enabled {
        (a / device_side).max(1.0)
    } else {
        1.0
    }
}

pub fn run_scaling_study(
    env: &Environment,
    c: &ScalingCampaign,
    opts: RunOptions,
) -> Result<ScalingReport> {
    c.validate()?;
    let device_side = env.ctx.magnet.equivalent_cube_side();
    let mut rows_out = Vec::new();
    let mut trials = Vec::new();
    for (i, &a) in c.sides_mm.iter().enumerate() {
        let scale = array_scale(a * 1e-3, device_side, c.scale_array);
        let mut e = env.clone();
        e.ctx.magnet = MagnetSpec::new(env.ctx.magnet.remanence, (a * 1e-3).powi(3))?;
        e.ctx.array = env.ctx.array.scaled(scale);
        let mut s = Search {
            env: &e,
            c,
            n: c.n,
            series: i as u64,
            trials: Vec::new(),
            opts,
        };
        let (z, probes, flag) = s.z_max()?;
        trials.append(&mut s.trials);
        rows_out.push(ScalingRow {
            side_mm: a,
            array_scale: scale,
            z_max_mm: z,
            probes,
            flag,
        });
    }
    let good: Vec<&ScalingRow> = rows_out.iter().filter(|r| r.flag.is_none()).collect();
    let fit = if good.len() >= 2 {
        let x: Vec<f64> = good.iter().map(|r| r.side_mm).collect();
        let y: Vec<f64> = good.iter().map(|r| r.z_max_mm).collect();
        linear_fit(&x, &y).ok()
    } else {
        None
    };
    let optimized = match &c.optimized {
        None => None,
        Some(o) => {
            let mut e = env.clone();
            e.ctx.oscillator.theta_max = o.theta_max_deg.to_radians();
            e.ctx.oscillator.f_res = o.f_res_hz;
            e.ctx.oscillator.validate()?;
            let mut s = Search {
                env: &e,
                c,
                n: o.n,
                series: c.sides_mm.len() as u64,
                trials: Vec::new(),
                opts,
            };
            let (z, probes, flag) = s.z_max()?;
            trials.append(&mut s.trials);
            Some(ScalingRow {
                side_mm: device_side * 1e3,
                array_scale: 1.0,
                z_max_mm: z,
                probes,
                flag,
            })
        }
    };
    Ok(ScalingReport {
        rows: rows_out,
        fit,
        optimized,
        array_scaling: if c.scale_array {
            format!(
                "pitch and extent scaled by max(1, a / {:.4} mm)",
                device_side * 1e3
            )
        } else {
            "unscaled".into()
        },
        trials,
    })
}
