//! Run configuration, read from a TOML file.
//!
//! ```toml
//! seed = 13
//! dev_fraction = 0.2
//! parallelism = 4
//! level = "abstract"
//!
//! [backend]
//! endpoint_url = "https://api.openai.com/v1"
//! model_name = "gpt-4o"
//!
//! [embedding]
//! endpoint_url = "https://api.openai.com/v1"
//! model_name = "text-embedding-3-small"
//!
//! [thresholds]
//! qudsim = 0.25   # overrides the bundled default
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::alignment::{Provenance, TemplateCounting, ThresholdConfig};
use crate::corpus::AbstractionLevel;
use crate::llm::BackendConfig;
use crate::{Error, Result};

fn default_embedding() -> BackendConfig {
    BackendConfig::new("https://api.openai.com/v1", "text-embedding-3-small")
}

fn default_seed() -> u64 {
    13
}

fn default_dev_fraction() -> f64 {
    0.2
}

fn default_parallelism() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Model for segmentation, abstraction, QUD generation and answering.
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default = "default_embedding")]
    pub embedding: BackendConfig,
    #[serde(default)]
    pub judge: BackendConfig,
    /// Per-metric threshold overrides.
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_dev_fraction")]
    pub dev_fraction: f64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    /// QUD level used for scoring.
    #[serde(default)]
    pub level: AbstractionLevel,
    /// Require each direction above tau instead of the combined score.
    #[serde(default)]
    pub per_direction: bool,
    #[serde(default)]
    pub template_counting: TemplateCounting,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            backend: BackendConfig::default(),
            embedding: default_embedding(),
            judge: BackendConfig::default(),
            thresholds: BTreeMap::new(),
            seed: default_seed(),
            dev_fraction: default_dev_fraction(),
            parallelism: default_parallelism(),
            level: AbstractionLevel::default(),
            per_direction: false,
            template_counting: TemplateCounting::default(),
        }
    }
}

impl Config {
    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self> {
        let de = toml::Deserializer::new(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let location = e.path().to_string();
            Error::schema(origin, location, e.into_inner().message().trim().to_string())
        })?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    fn validate(&self, origin: &str) -> Result<()> {
        if !(self.dev_fraction > 0.0 && self.dev_fraction <= 1.0) {
            return Err(Error::schema(origin, "dev_fraction", "must lie in (0, 1]"));
        }
        if self.parallelism == 0 {
            return Err(Error::schema(origin, "parallelism", "must be at least 1"));
        }
        for (metric, tau) in &self.thresholds {
            if !(0.0..=1.0).contains(tau) {
                return Err(Error::schema(
                    origin,
                    format!("thresholds.{metric}"),
                    "must lie in [0, 1]",
                ));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Threshold for a metric: the config override if present, otherwise
    /// the bundled default.
    pub fn threshold_for(&self, metric_id: &str) -> Option<ThresholdConfig> {
        match self.thresholds.get(metric_id) {
            Some(&tau) => Some(ThresholdConfig {
                metric_id: metric_id.to_string(),
                tau,
                provenance: Provenance::Manual,
            }),
            None => ThresholdConfig::default_for(metric_id),
        }
    }

    /// Points every backend's cache at `dir`.
    pub fn with_cache_dir(mut self, dir: &Path) -> Self {
        for b in [&mut self.backend, &mut self.embedding, &mut self.judge] {
            b.cache_dir = dir.to_path_buf();
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = Config::from_toml_str("seed = 7\n[thresholds]\nqudsim = 0.3\n", "t").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.backend.temperature, 1.0);
        assert_eq!(cfg.backend.top_p, 1.0);
        assert_eq!(cfg.threshold_for("qudsim").unwrap().tau, 0.3);
        assert_eq!(cfg.threshold_for("cosine").unwrap().tau, 0.71);
        assert_eq!(cfg.embedding.model_name, "text-embedding-3-small");
    }

    #[test]
    fn errors_name_the_key() {
        let err =
            Config::from_toml_str("[backend]\nendpoint_url = 3\nmodel_name = \"m\"\n", "t").unwrap_err();
        match err {
            Error::Schema { location, .. } => assert_eq!(location, "backend.endpoint_url"),
            other => panic!("{other}"),
        }
        assert!(Config::from_toml_str("dev_fraction = 0.0", "t").is_err());
        assert!(Config::from_toml_str("bogus = 1", "t").is_err());
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(Config::default().hash(), Config::default().hash());
        let other = Config {
            seed: 1,
            ..Config::default()
        };
        assert_ne!(Config::default().hash(), other.hash());
    }
}
