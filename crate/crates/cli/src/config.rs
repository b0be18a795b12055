use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use narrascope_core::llm::GatewayConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub gateway: GatewayConfig,
    /// Where session snapshots and event logs are written. None keeps
    /// sessions in memory only.
    pub data_dir: Option<PathBuf>,
}

impl AppConfig {
    /// Reads a TOML or JSON file (by extension) and applies environment
    /// overrides.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            None => AppConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                match p.extension().and_then(|e| e.to_str()) {
                    Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?,
                    Some("toml") | None => toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?,
                    Some(other) => bail!("unsupported config format `.{other}` (use .toml or .json)"),
                }
            }
        };
        cfg.apply_env(|k| std::env::var(k).ok());
        cfg.gateway.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        self.gateway.apply_env(&get);
        if let Some(dir) = get("NARRASCOPE_DATA_DIR") {
            self.data_dir = Some(dir.into());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_env_layer() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("narrascope.toml");
        std::fs::write(
            &path,
            "data_dir = \"/tmp/sessions\"\n[gateway]\nstub_mode = true\n[gateway.reasoning]\nmodel_name = \"big\"\nmax_retries = 2\n",
        )
        .unwrap();
        let mut cfg: AppConfig = toml::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(cfg.gateway.reasoning.model_name, "big");
        assert_eq!(cfg.gateway.reasoning.max_retries, 2);
        assert_eq!(cfg.gateway.lightweight.max_retries, 1);
        cfg.apply_env(|k| (k == "NARRASCOPE_DATA_DIR").then(|| "/srv/ns".to_string()));
        assert_eq!(cfg.data_dir.as_deref(), Some(Path::new("/srv/ns")));
    }

    #[test]
    fn unknown_extension_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.yaml");
        std::fs::write(&path, "x: 1").unwrap();
        assert!(AppConfig::load(Some(&path)).is_err());
    }
}
