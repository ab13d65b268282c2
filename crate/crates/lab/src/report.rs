//! Report files: summary CSV, per-trial JSON lines and the full report as JSON.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::campaigns::CampaignReport;
use crate::error::{LabError, Result};

/// SHA-256 of the compact JSON encoding.
pub fn hash_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(value)?)))
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One JSON document per line.
pub fn json_lines<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for it in items {
        out.push_str(&serde_json::to_string(it)?);
        out.push('\n');
    }
    Ok(out)
}

impl CampaignReport {
    /// Raw per-trial (or per-segment) rows, one JSON document per line.
    pub fn trial_lines(&self) -> Result<String> {
        match self {
            CampaignReport::Sweep(r) => json_lines(&r.trials),
            CampaignReport::PrecisionVsN(r) => json_lines(&r.trials),
            CampaignReport::Damping(r) => json_lines(&r.trials),
            CampaignReport::Scaling(r) => json_lines(&r.trials),
            CampaignReport::Superfast(r) => {
                let segs: Vec<_> = r
                    .runs
                    .iter()
                    .flat_map(|run| {
                        run.segments
                            .iter()
                            .map(move |s| serde_json::json!({"n_seg": run.n_seg, "segment": s}))
                    })
                    .collect();
                json_lines(&segs)
            }
            CampaignReport::Interference(r) => {
                let mut s = json_lines(&r.smol_trials)?;
                s.push_str(&json_lines(&r.static_trials)?);
                Ok(s)
            }
            CampaignReport::ClosedLoop(r) => json_lines(&r.log),
        }
    }
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<PathBuf> {
    std::fs::write(path, contents).map_err(|e| LabError::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Writes `<stem>_summary.csv`, `<stem>_trials.jsonl` and `<stem>_report.json` into `dir`.
pub fn write_campaign(dir: &Path, stem: &str, report: &CampaignReport) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    Ok(vec![
        write_file(
            &dir.join(format!("{stem}_summary.csv")),
            report.summary_csv()?.as_bytes(),
        )?,
        write_file(
            &dir.join(format!("{stem}_trials.jsonl")),
            report.trial_lines()?.as_bytes(),
        )?,
        write_file(
            &dir.join(format!("{stem}_report.json")),
            &serde_json::to_vec_pretty(report)?,
        )?,
    ])
}
