use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use stance_core::analytics::SmoothingConfig;
use stance_core::corpus::ScreeningConfig;
use stance_core::gateway::ModelConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Sampling {
    /// Seed of the human-validation sample.
    pub validation_seed: u64,
    pub validation_n: usize,
    /// Seed of the expert theme-validation sample.
    pub theme_validation_seed: u64,
    pub theme_validation_n: usize,
    /// Seed of the justification sample used for theme extraction.
    pub extraction_seed: u64,
    pub extraction_max_sample: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            validation_seed: 0,
            validation_n: 150,
            theme_validation_seed: 0,
            theme_validation_n: 50,
            extraction_seed: 0,
            extraction_max_sample: 800,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Analytics {
    pub smoothing: SmoothingConfig,
    pub top_n: usize,
    pub top_k: usize,
}

impl Default for Analytics {
    fn default() -> Self {
        Analytics {
            smoothing: SmoothingConfig::default(),
            top_n: 20,
            top_k: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Service {
    pub bind: SocketAddr,
    /// Bearer token to rater id.
    pub tokens: BTreeMap<String, String>,
}

impl Default for Service {
    fn default() -> Self {
        Service {
            bind: SocketAddr::from(([127, 0, 0, 1], 8787)),
            tokens: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub store_path: PathBuf,
    pub screening: ScreeningConfig,
    /// Defaults for every model-backed stage.
    pub model: ModelConfig,
    /// Per-stage overrides (`prescreen`, `classify`, `reflect`, `themes`,
    /// `paraphrase`); unset keys fall back to `model`.
    pub stages: BTreeMap<String, toml::Table>,
    pub sampling: Sampling,
    pub analytics: Analytics,
    pub service: Service,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            store_path: PathBuf::from("store"),
            screening: ScreeningConfig::default(),
            model: ModelConfig::default(),
            stages: BTreeMap::new(),
            sampling: Sampling::default(),
            analytics: Analytics::default(),
            service: Service::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.screening.validate().context("screening config")?;
        cfg.model.validate().context("model config")?;
        cfg.analytics.smoothing.validate().context("smoothing config")?;
        for stage in cfg.stages.keys() {
            cfg.stage_model(stage)?;
        }
        Ok(cfg)
    }

    /// The model settings for `stage`: the global table with the stage's keys
    /// laid over it.
    pub fn stage_model(&self, stage: &str) -> Result<ModelConfig> {
        let Some(overrides) = self.stages.get(stage) else {
            return Ok(self.model.clone());
        };
        let mut table = toml::Table::try_from(&self.model).context("model config")?;
        for (k, v) in overrides {
            table.insert(k.clone(), v.clone());
        }
        let cfg: ModelConfig = table
            .try_into()
            .with_context(|| format!("model config for stage '{stage}'"))?;
        cfg.validate()
            .with_context(|| format!("model config for stage '{stage}'"))?;
        Ok(cfg)
    }

    /// SHA-256 of the resolved configuration, leaving out the store location
    /// and the rater tokens.
    pub fn hash(&self) -> String {
        let mut cfg = self.clone();
        cfg.store_path = PathBuf::new();
        cfg.service.tokens.clear();
        stance_core::sha256_hex(serde_json::to_string(&cfg).expect("config serializes"))
    }
}
