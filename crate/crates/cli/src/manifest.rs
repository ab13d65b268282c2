use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use smol_lab::report::hash_bytes;

#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

/// Record of one command run. Everything except the timestamps is reproducible.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    /// SHA-256 of the parsed config re-encoded as compact JSON, so formatting and
    /// comments do not change it.
    pub config_sha256: String,
    pub seed: u64,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn new(command: &str, config_path: &Path, config_sha256: String, seed: u64) -> Self {
        Self {
            command: command.into(),
            config_path: config_path.display().to_string(),
            config_sha256,
            seed,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            started_at: now(),
            finished_at: String::new(),
            outputs: Vec::new(),
        }
    }

    /// Hashes each written file and writes `manifest.json` next to them.
    pub fn finish(mut self, dir: &Path, files: &[PathBuf]) -> Result<PathBuf> {
        for f in files {
            let bytes =
                std::fs::read(f).with_context(|| format!("reading back {}", f.display()))?;
            let rel = f.strip_prefix(dir).unwrap_or(f);
            self.outputs.push(OutputFile {
                path: rel.display().to_string(),
                sha256: hash_bytes(&bytes),
            });
        }
        self.finished_at = now();
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&self)?)
            .with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
