use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{Context, Result};
use rarl_core::config::ExperimentConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const RUNS_DIR_VAR: &str = "RARL_RUNS_DIR";

#[derive(Serialize)]
struct Manifest {
    git_describe: String,
    config_sha256: String,
    seed: u64,
    created: String,
    args: Vec<String>,
    tool_version: &'static str,
}

/// `<root>/<timestamp>-<tag>/{config.json, manifest.json, checkpoints/, logs/}`.
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(cfg: &ExperimentConfig, tag: &str) -> Result<Self> {
        let base = cfg
            .output
            .clone()
            .or_else(|| std::env::var_os(RUNS_DIR_VAR).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"));
        let now = chrono::Local::now();
        let stamp = now.format("%Y%m%d-%H%M%S");
        let mut root = base.join(format!("{stamp}-{tag}"));
        let mut n = 1;
        while root.exists() {
            root = base.join(format!("{stamp}-{tag}-{n}"));
            n += 1;
        }
        std::fs::create_dir_all(root.join("checkpoints"))
            .and_then(|_| std::fs::create_dir_all(root.join("logs")))
            .with_context(|| format!("creating run directory {}", root.display()))?;

        let config = cfg.to_json_pretty();
        std::fs::write(root.join("config.json"), format!("{config}\n"))?;
        let hash = Sha256::digest(config.as_bytes());
        let manifest = Manifest {
            git_describe: git_describe(),
            config_sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
            seed: cfg.seed,
            created: now.to_rfc3339(),
            args: std::env::args().collect(),
            tool_version: env!("CARGO_PKG_VERSION"),
        };
        std::fs::write(root.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn logs(&self) -> PathBuf {
        self.root.join("logs")
    }
}

fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}
