use serde::{Deserialize, Serialize};
use smol_core::model::Pose;

use super::sweep::check_n;
use super::{
    default_position, mean3, pooled_sigma, positions_by_point, rows, run_jobs, Job, RunOptions,
};
use crate::config::Environment;
use crate::error::{LabError, Result};
use crate::trial::TrialRow;

fn default_ns() -> Vec<usize> {
    vec![1, 2, 4, 6, 10, 20]
}

/// Excitation plus buffer time per fix.
pub const DEFAULT_OVERHEAD_S: f64 = 0.08;

fn default_overhead() -> f64 {
    DEFAULT_OVERHEAD_S
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrecisionCampaign {
    #[serde(default = "default_ns")]
    pub ns: Vec<usize>,
    #[serde(default = "default_position")]
    pub position_mm: [f64; 3],
    #[serde(default = "default_overhead")]
    pub overhead_s: f64,
}

impl Default for PrecisionCampaign {
    fn default() -> Self {
        Self {
            ns: default_ns(),
            position_mm: default_position(),
            overhead_s: DEFAULT_OVERHEAD_S,
        }
    }
}

impl PrecisionCampaign {
    pub fn validate(&self) -> Result<()> {
        if self.ns.is_empty() {
            return Err(LabError::field("campaign.ns", "empty list"));
        }
        self.ns.iter().try_for_each(|n| check_n(*n))?;
        if !(self.overhead_s >= 0.0) {
            return Err(LabError::field(
                "campaign.overhead_s",
                "must be non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRow {
    pub n: usize,
    pub sigma_x_mm: f64,
    pub sigma_y_mm: f64,
    pub sigma_z_mm: f64,
    pub sigma_xyz_mm: f64,
    pub f_loc_hz: f64,
    pub ok: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub rows: Vec<PrecisionRow>,
    pub trials: Vec<TrialRow>,
}

/// Localization rate when every fix needs an excitation/buffer overhead plus N half periods.
pub fn localization_rate(f_res: f64, n: usize, overhead_s: f64) -> f64 {
    1.0 / (n as f64 / (2.0 * f_res) + overhead_s)
}

/// Repeated static localizations per N. Repeat `r` uses the same noise seed for every N.
pub fn run_precision_vs_n(
    env: &Environment,
    c: &PrecisionCampaign,
    opts: RunOptions,
) -> Result<PrecisionReport> {
    c.validate()?;
    let p = c.position_mm;
    let truth = Pose::from_mm(p[0], p[1], p[2], Pose::flat_orientation());
    let jobs: Vec<Job> =
        c.ns.iter()
            .enumerate()
            .flat_map(|(i, &n)| (0..env.repeats).map(move |r| Job::new(env, i, 0, r, truth, n)))
            .collect();
    let outcomes = run_jobs(env, &jobs)?;
    let groups = positions_by_point(&jobs, &outcomes, c.ns.len());
    let rows_out =
        c.ns.iter()
            .zip(&groups)
            .map(|(&n, g)| {
                let s = pooled_sigma(std::slice::from_ref(g));
                PrecisionRow {
                    n,
                    sigma_x_mm: s[0],
                    sigma_y_mm: s[1],
                    sigma_z_mm: s[2],
                    sigma_xyz_mm: mean3(&s),
                    f_loc_hz: localization_rate(env.ctx.oscillator.f_res, n, c.overhead_s),
                    ok: g.len(),
                }
            })
            .collect();
    Ok(PrecisionReport {
        rows: rows_out,
        trials: rows(&jobs, &outcomes, opts),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_decreases_with_n() {
        let r: Vec<f64> = default_ns()
            .iter()
            .map(|n| localization_rate(103.5, *n, 0.08))
            .collect();
        assert!(r.windows(2).all(|w| w[1] < w[0]));
        assert!((localization_rate(103.5, 2, 0.08) - 1.0 / (1.0 / 103.5 + 0.08)).abs() < 1e-12);
    }
}
