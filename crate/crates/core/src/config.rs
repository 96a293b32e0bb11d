//! Top-level experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dynamics::AircraftModel;
use crate::environment::EnvSettings;
use crate::error::ConfigError;
use crate::ppo::{PpoConfig, RarlConfig};
use crate::reference::PathSettings;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: AircraftModel,
    pub env: EnvSettings,
    pub paths: PathSettings,
    pub ppo: PpoConfig,
    pub rarl: RarlConfig,
    /// Root for run directories; falls back to the environment and then `runs`.
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        self.env.validate()?;
        self.paths.validate()?;
        self.ppo.validate()?;
        self.rarl.validate()
    }

    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::from_json_str(&cfg.to_json_pretty()).unwrap(), cfg);
        assert_eq!(cfg.ppo.n_steps, 2048);
        assert_eq!(cfg.ppo.clip_range, Some(0.2));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_json_str(r#"{"ppo": {"learning_rat": 1e-3}}"#).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"sed": 3}"#).is_err());
        let cfg = ExperimentConfig::from_json_str(r#"{"ppo": {"n_envs": 2}, "seed": 9}"#).unwrap();
        assert_eq!((cfg.ppo.n_envs, cfg.seed, cfg.ppo.batch_size), (2, 9, 64));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ExperimentConfig::from_json_str(r#"{"ppo": {"gamma": 1.5}}"#).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"env": {"abort_radius": -1}}"#).is_err());
    }
}
