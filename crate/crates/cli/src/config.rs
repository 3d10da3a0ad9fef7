use std::path::{Path, PathBuf};

use nqs_core::ansatz::AnsatzConfig;
use nqs_core::vmc::TrainConfig;
use serde::{Deserialize, Serialize};

/// Invalid or unreadable run configuration.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Everything needed to reproduce a training run. Relative paths are
/// resolved against the directory of the configuration file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub hamiltonian: PathBuf,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub ansatz: AnsatzConfig,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_output() -> PathBuf {
    PathBuf::from("runs/latest")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.hamiltonian = base.join(&cfg.hamiltonian);
        cfg.output_dir = base.join(&cfg.output_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.hamiltonian.is_file() {
            return Err(ConfigError(format!("Hamiltonian file {} does not exist", self.hamiltonian.display())));
        }
        self.ansatz.validate().map_err(|e| ConfigError(e.to_string()))?;
        self.train.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg: RunConfig = toml::from_str("hamiltonian = \"h2.fcidump\"").unwrap();
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.ansatz, AnsatzConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("hamiltonian = \"x\"\nlearning_rate = 1").is_err());
        assert!(toml::from_str::<RunConfig>("hamiltonian = \"x\"\n[train]\nsteps = 3").is_err());
    }

    #[test]
    fn nested_tables() {
        let text = "hamiltonian = \"x\"\n[ansatz]\nkind = \"made\"\n[train]\nseed = 4\n[train.schedule]\ntotal_steps = 9\n[train.sampling]\nn_end = 500\n";
        let cfg: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(cfg.ansatz.kind.name(), "made");
        assert_eq!(cfg.train.seed, 4);
        assert_eq!(cfg.train.schedule.total_steps, 9);
        assert_eq!(cfg.train.sampling.n_end, 500);
    }
}
