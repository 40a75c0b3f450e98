//! Run manifest: written atomically at run start, immutable afterwards.

use anyhow::{Context, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub run_id: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub code_version: String,
    pub checkpoint_paths: Vec<String>,
    pub started_at_unix: u64,
}

impl RunManifest {
    pub fn new(run_id: &str, command: &str, seed: u64, config_echo: &toml::Table, checkpoints: &[PathBuf]) -> Self {
        RunManifest {
            run_id: run_id.to_string(),
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config_echo).unwrap_or(serde_json::Value::Null),
            code_version: git_describe(),
            checkpoint_paths: checkpoints.iter().map(|p| p.display().to_string()).collect(),
            started_at_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    /// Write-then-rename so a manifest is either absent or complete.
    pub fn write_atomic(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let final_path = dir.join("manifest.json");
        let tmp_path = dir.join(".manifest.json.tmp");
        let body = serde_json::to_string_pretty(self).context("serializing manifest")?;
        std::fs::write(&tmp_path, body).with_context(|| format!("writing {}", tmp_path.display()))?;
        std::fs::rename(&tmp_path, &final_path)
            .with_context(|| format!("renaming into {}", final_path.display()))?;
        Ok(final_path)
    }
}

fn git_describe() -> String {
    std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}
