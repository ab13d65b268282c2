use serde::{Deserialize, Serialize};
use smol_core::metrics::linear_fit;
use smol_core::model::{DampingLaw, Pose};

use super::sweep::check_n;
use super::{
    default_position, mean3, pooled_sigma, positions, rows, run_jobs, Job, Range, RunOptions,
};
use crate::config::Environment;
use crate::error::{LabError, Result};
use crate::trial::TrialRow;

fn default_eta() -> Range {
    Range::new(0.0, 25.0, 5.0)
}

fn default_ns() -> Vec<usize> {
    vec![2, 20]
}

/// Largest damping coefficient accepted (1/s).
pub const MAX_ETA: f64 = 35.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DampingCampaign {
    #[serde(default = "default_eta")]
    pub eta_per_s: Range,
    #[serde(default = "default_ns")]
    pub ns: Vec<usize>,
    #[serde(default = "default_position")]
    pub position_mm: [f64; 3],
}

impl Default for DampingCampaign {
    fn default() -> Self {
        Self {
            eta_per_s: default_eta(),
            ns: default_ns(),
            position_mm: default_position(),
        }
    }
}

impl DampingCampaign {
    pub fn validate(&self) -> Result<()> {
        self.eta_per_s.validate("campaign.eta_per_s")?;
        if self.eta_per_s.start < 0.0 || self.eta_per_s.stop > MAX_ETA {
            return Err(LabError::field(
                "campaign.eta_per_s",
                format!("must lie within [0, {MAX_ETA}]"),
            ));
        }
        if self.ns.is_empty() {
            return Err(LabError::field("campaign.ns", "empty list"));
        }
        self.ns.iter().try_for_each(|n| check_n(*n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingRow {
    pub n: usize,
    pub eta_per_s: f64,
    pub sigma_x_mm: f64,
    pub sigma_y_mm: f64,
    pub sigma_z_mm: f64,
    pub sigma_xyz_mm: f64,
    pub ok: usize,
}

/// Linear regression of σ_xyz on η.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingFit {
    pub n: usize,
    /// µm per (1/s), i.e. µm·s.
    pub slope_um_s: f64,
    pub intercept_mm: f64,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DampingReport {
    pub rows: Vec<DampingRow>,
    pub fits: Vec<DampingFit>,
    pub trials: Vec<TrialRow>,
}

/// σ versus η under the exponential damping law, one series per N.
pub fn run_damping_sweep(
    env: &Environment,
    c: &DampingCampaign,
    opts: RunOptions,
) -> Result<DampingReport> {
    c.validate()?;
    let etas = c.eta_per_s.values();
    let p = c.position_mm;
    let truth = Pose::from_mm(p[0], p[1], p[2], Pose::flat_orientation());
    let envs: Vec<Environment> = etas
        .iter()
        .map(|&eta| {
            let mut e = env.clone();
            e.ctx.oscillator.eta = eta;
            e.ctx.oscillator.damping = DampingLaw::Exponential;
            e
        })
        .collect();

    let mut all_rows = Vec::new();
    let mut fits = Vec::new();
    let mut trials = Vec::new();
    for (ni, &n) in c.ns.iter().enumerate() {
        let mut series = Vec::new();
        for (ei, e) in envs.iter().enumerate() {
            let point = ni * etas.len() + ei;
            // same noise realizations at every η
            let jobs: Vec<Job> = (0..env.repeats)
                .map(|r| Job::new(env, point, ni as u64, r, truth, n))
                .collect();
            let outcomes = run_jobs(e, &jobs)?;
            let g = positions(&outcomes);
            let s = pooled_sigma(std::slice::from_ref(&g));
            series.push((etas[ei], mean3(&s)));
            all_rows.push(DampingRow {
                n,
                eta_per_s: etas[ei],
                sigma_x_mm: s[0],
                sigma_y_mm: s[1],
                sigma_z_mm: s[2],
                sigma_xyz_mm: mean3(&s),
                ok: g.len(),
            });
            trials.extend(rows(&jobs, &outcomes, opts));
        }
        let (x, y): (Vec<f64>, Vec<f64>) =
            series.into_iter().filter(|(_, s)| s.is_finite()).unzip();
        if x.len() >= 2 {
            let f = linear_fit(&x, &y)?;
            fits.push(DampingFit {
                n,
                slope_um_s: f.slope * 1e3,
                intercept_mm: f.intercept,
                r2: f.r2,
            });
        }
    }
    Ok(DampingReport {
        rows: all_rows,
        fits,
        trials,
    })
}
