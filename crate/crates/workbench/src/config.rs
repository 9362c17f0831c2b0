//! Resolved run configuration and its provenance hash.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::EmbedProviderConfig;
use crate::forge::ForgeConfig;
use crate::gateway::ProviderConfig;
use crate::pipeline::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RerankerKind {
    Deepera,
    Cosine,
    None,
}

impl RerankerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "deepera" => Some(Self::Deepera),
            "cosine" => Some(Self::Cosine),
            "none" => Some(Self::None),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Deepera => "deepera",
            Self::Cosine => "cosine",
            Self::None => "none",
        }
    }
}

fn default_k_list() -> Vec<usize> {
    vec![1, 3, 5]
}
fn default_runs() -> usize {
    3
}
fn default_reranker() -> RerankerKind {
    RerankerKind::Deepera
}
fn default_seed() -> u64 {
    7
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    #[serde(default = "default_k_list")]
    pub k_list: Vec<usize>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_reranker")]
    pub reranker: RerankerKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k_list: default_k_list(),
            runs: default_runs(),
            reranker: default_reranker(),
            seed: default_seed(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkbenchConfig {
    #[serde(default = "ProviderConfig::mock")]
    pub provider: ProviderConfig,
    #[serde(default = "EmbedProviderConfig::offline")]
    pub embedder: EmbedProviderConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub forge: ForgeConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl Default for WorkbenchConfig {
    fn default() -> Self {
        Self {
            provider: ProviderConfig::mock(),
            embedder: EmbedProviderConfig::offline(),
            pipeline: PipelineConfig::default(),
            forge: ForgeConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {0}: {1}")]
    Io(String, std::io::Error),
    #[error("config is not valid JSON: {0}")]
    Parse(serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl WorkbenchConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(ConfigError::Parse)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.provider.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.pipeline.validate().map_err(ConfigError::Invalid)?;
        if self.eval.runs == 0 {
            return Err(ConfigError::Invalid("eval.runs must be >= 1".into()));
        }
        if self.eval.k_list.is_empty() || self.eval.k_list.iter().any(|k| *k == 0) {
            return Err(ConfigError::Invalid("eval.k_list values must be >= 1".into()));
        }
        if self.forge.distractor_count == 0 {
            return Err(ConfigError::Invalid("forge.distractor_count must be >= 1".into()));
        }
        Ok(())
    }

    /// Digest over the canonical (key-sorted) JSON form of the resolved
    /// config; any field change changes the hash.
    pub fn config_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex::encode(hasher.finalize())
    }
}

/// Execution record for one eval invocation. Timestamps live here, never in
/// the report itself, so reports stay byte-identical across repeat runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub dataset_path: String,
    pub started_at: String,
    pub finished_at: String,
    pub seed: u64,
}
