use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orchestrator::AgentConfig;
use crate::providers::ProviderConfig;

/// Settings file for the command-line tool.
///
/// ```toml
/// parallelism = 4
///
/// [agent]
/// max_rounds = 3
///
/// [chat]
/// base_url = "http://localhost:8000/v1"
/// model = "qwen2.5-vl-7b"
///
/// [embed]
/// base_url = "http://localhost:9000"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub agent: AgentConfig,
    pub chat: ProviderConfig,
    pub embed: ProviderConfig,
    /// Rule file for the scripted backend; when set it replaces both HTTP
    /// backends.
    pub scripted: Option<PathBuf>,
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            agent: AgentConfig::default(),
            chat: ProviderConfig::default(),
            embed: ProviderConfig {
                base_url: "http://localhost:9000".into(),
                ..ProviderConfig::default()
            },
            scripted: None,
            parallelism: 1,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))
    }

    /// Reads a config file; a relative `scripted` path resolves against the
    /// file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        if let (Some(s), Some(dir)) = (cfg.scripted.as_mut(), path.parent()) {
            if s.is_relative() {
                *s = dir.join(&*s);
            }
        }
        Ok(cfg)
    }
}
