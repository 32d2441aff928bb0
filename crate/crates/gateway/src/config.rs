//! Gateway settings: a TOML file, then `SHROUD_*` environment overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use shroud_core::mapping::{MappingConfig, DEFAULT_DELTA, DEFAULT_K};
use shroud_core::provider::EndpointConfig;
use shroud_core::retrieval::DEFAULT_TOP_K;
use thiserror::Error;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_TTL_SECS: u64 = 30 * 60;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid value {value:?} for {var}")]
    Env { var: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub port: u16,
    pub corpus_dir: PathBuf,
    /// Candidates per surrogate set.
    pub k: usize,
    /// Minimum normalized edit distance between candidates of one set.
    pub delta: f64,
    /// Chunks retrieved per question.
    pub top_k: usize,
    /// Idle sessions are closed after this many seconds.
    pub ttl_secs: u64,
    /// Fixed seed for session sampling; random when unset.
    pub seed: Option<u64>,
    /// External NER service; the rule detector is used when unset.
    pub ner_url: Option<String>,
    pub local: Option<EndpointConfig>,
    pub cloud: Option<EndpointConfig>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            port: DEFAULT_PORT,
            corpus_dir: PathBuf::from("corpus"),
            k: DEFAULT_K,
            delta: DEFAULT_DELTA,
            top_k: DEFAULT_TOP_K,
            ttl_secs: DEFAULT_TTL_SECS,
            seed: None,
            ner_url: None,
            local: None,
            cloud: None,
        }
    }
}

fn parse<T: std::str::FromStr>(var: &str, value: String) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Env { var: var.to_string(), value })
}

impl GatewayConfig {
    /// Reads `path` if given, then applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::from_toml_file(p)?,
            None => Self::default(),
        };
        cfg.apply_env(|name| std::env::var(name).ok().filter(|v| !v.is_empty()))?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, ConfigError> {
        let raw = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        toml::from_str(&raw).map_err(|e| ConfigError::Parse { path: path.into(), message: e.to_string() })
    }

    /// Overrides fields from `SHROUD_*` variables looked up through `get`.
    /// Endpoints come from `SHROUD_LOCAL_URL` / `SHROUD_CLOUD_URL` and their
    /// `_API_KEY`, `_MODEL` and `_TIMEOUT_SECS` companions.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = get("SHROUD_PORT") {
            self.port = parse("SHROUD_PORT", v)?;
        }
        if let Some(v) = get("SHROUD_CORPUS_DIR") {
            self.corpus_dir = PathBuf::from(v);
        }
        if let Some(v) = get("SHROUD_K") {
            self.k = parse("SHROUD_K", v)?;
        }
        if let Some(v) = get("SHROUD_DELTA") {
            self.delta = parse("SHROUD_DELTA", v)?;
        }
        if let Some(v) = get("SHROUD_TOP_K") {
            self.top_k = parse("SHROUD_TOP_K", v)?;
        }
        if let Some(v) = get("SHROUD_TTL_SECS") {
            self.ttl_secs = parse("SHROUD_TTL_SECS", v)?;
        }
        if let Some(v) = get("SHROUD_SEED") {
            self.seed = Some(parse("SHROUD_SEED", v)?);
        }
        if let Some(v) = get("SHROUD_NER_URL") {
            self.ner_url = Some(v);
        }
        for (prefix, slot) in [("SHROUD_LOCAL", &mut self.local), ("SHROUD_CLOUD", &mut self.cloud)] {
            let var = |name: &str| get(&format!("{prefix}_{name}"));
            if let Some(url) = var("URL") {
                let mut ep = slot.take().unwrap_or_else(|| EndpointConfig::new(url.clone(), "default"));
                ep.base_url = url;
                if let Some(m) = var("MODEL") {
                    ep.model = m;
                }
                if let Some(key) = var("API_KEY") {
                    ep.api_key = Some(key);
                }
                if let Some(t) = var("TIMEOUT_SECS") {
                    ep.timeout_secs = parse(&format!("{prefix}_TIMEOUT_SECS"), t)?;
                }
                *slot = Some(ep);
            }
        }
        Ok(())
    }

    pub fn mapping(&self) -> MappingConfig {
        MappingConfig { k: self.k, delta: self.delta, ..MappingConfig::default() }
    }

    pub fn ttl(&self) -> Duration {
        Duration::from_secs(self.ttl_secs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn env_overrides_file_values() {
        let mut cfg: GatewayConfig = toml::from_str("port = 9000\nk = 7\n").unwrap();
        let env: HashMap<&str, &str> = HashMap::from([
            ("SHROUD_K", "6"),
            ("SHROUD_TTL_SECS", "5"),
            ("SHROUD_CLOUD_URL", "http://cloud.example/v1"),
            ("SHROUD_CLOUD_API_KEY", "k"),
        ]);
        cfg.apply_env(|n| env.get(n).map(|v| v.to_string())).unwrap();
        assert_eq!(cfg.port, 9000);
        assert_eq!(cfg.k, 6);
        assert_eq!(cfg.ttl(), Duration::from_secs(5));
        let cloud = cfg.cloud.unwrap();
        assert_eq!(cloud.base_url, "http://cloud.example/v1");
        assert_eq!(cloud.api_key.as_deref(), Some("k"));
        assert!(cfg.local.is_none());
    }

    #[test]
    fn bad_env_value_is_reported() {
        let mut cfg = GatewayConfig::default();
        let err = cfg.apply_env(|n| (n == "SHROUD_PORT").then(|| "eighty".to_string())).unwrap_err();
        assert!(matches!(err, ConfigError::Env { ref var, .. } if var == "SHROUD_PORT"));
    }

    #[test]
    fn defaults_and_unknown_keys() {
        let cfg = GatewayConfig::default();
        assert_eq!(cfg.ttl_secs, 1800);
        assert_eq!(cfg.k, 5);
        assert!(toml::from_str::<GatewayConfig>("colour = 1").is_err());
    }
}
