//! Layered settings: built-in defaults, then the TOML config file, then
//! environment variables, then command-line flags.
//!
//! ```toml
//! [model]
//! base_url = "https://api.example.com/v1"
//! name = "some-vlm"
//! timeout_ms = 60000
//! max_retries = 3
//! parallelism = 4
//! # mock_script = "fixtures/mock/script.json"
//!
//! [construction]
//! capacity = 2048
//! image_cost = 256
//!
//! [retrieval]
//! depth = 3
//! width = 3
//! with_refs = true
//! max_refs = 8
//!
//! [paths]
//! media_dir = "media"
//! graph = "family.lgr.jsonl"
//!
//! [logging]
//! level = "warn"
//! ```
//!
//! Relative paths in the file are resolved against the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lifegraph::construction::{ConstructionConfig, PackingConfig};
use lifegraph::model::{ChatModel, HttpConfig, HttpModel, ScriptedMock};
use lifegraph::retrieval::RetrievalConfig;
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSettings {
    pub base_url: Option<String>,
    pub name: Option<String>,
    pub api_key: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub parallelism: usize,
    /// Scripted mock transcript; takes the place of the HTTP backend.
    pub mock_script: Option<PathBuf>,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            base_url: None,
            name: None,
            api_key: None,
            timeout_ms: 60_000,
            max_retries: 3,
            parallelism: 4,
            mock_script: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructionSettings {
    pub capacity: u64,
    pub image_cost: u64,
    pub context_budget: usize,
}

impl Default for ConstructionSettings {
    fn default() -> Self {
        let c = ConstructionConfig::default();
        Self {
            capacity: c.packing.capacity,
            image_cost: c.packing.image_cost,
            context_budget: c.context_budget,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSettings {
    pub media_dir: Option<PathBuf>,
    pub graph: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoggingSettings {
    pub level: String,
}

impl Default for LoggingSettings {
    fn default() -> Self {
        Self { level: "warn".into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelSettings,
    pub construction: ConstructionSettings,
    pub retrieval: RetrievalConfig,
    pub paths: PathSettings,
    pub logging: LoggingSettings,
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p.as_mut() {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve(base, &mut cfg.model.mock_script);
        resolve(base, &mut cfg.paths.media_dir);
        resolve(base, &mut cfg.paths.graph);
        Ok(cfg)
    }

    /// Overlays `MODEL_BASE_URL`, `MODEL_NAME`, `MODEL_API_KEY`,
    /// `MODEL_TIMEOUT_MS` and `LIFEGRAPH_LOG`, read through `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<()> {
        let var = |k: &str| var(k).filter(|v| !v.is_empty());
        if let Some(v) = var("MODEL_BASE_URL") {
            self.model.base_url = Some(v);
        }
        if let Some(v) = var("MODEL_NAME") {
            self.model.name = Some(v);
        }
        if let Some(v) = var("MODEL_API_KEY") {
            self.model.api_key = Some(v);
        }
        if let Some(v) = var("MODEL_TIMEOUT_MS") {
            self.model.timeout_ms = v
                .parse()
                .with_context(|| format!("MODEL_TIMEOUT_MS={v:?} is not an integer"))?;
        }
        if let Some(v) = var("LIFEGRAPH_LOG") {
            self.logging.level = v;
        }
        Ok(())
    }

    pub fn construction_config(&self) -> ConstructionConfig {
        ConstructionConfig {
            packing: PackingConfig {
                capacity: self.construction.capacity,
                image_cost: self.construction.image_cost,
            },
            context_budget: self.construction.context_budget,
            ..ConstructionConfig::default()
        }
    }

    /// The scripted mock when one is configured, the HTTP backend otherwise.
    pub fn model(&self) -> Result<Box<dyn ChatModel>> {
        if let Some(script) = &self.model.mock_script {
            let mock = ScriptedMock::from_path(script)?;
            return Ok(Box::new(mock));
        }
        let (Some(base), Some(name)) = (&self.model.base_url, &self.model.name) else {
            bail!("no model configured: pass --mock <script.json>, or set MODEL_BASE_URL and MODEL_NAME");
        };
        let mut http = HttpConfig::new(base.clone(), name.clone());
        http.api_key = self.model.api_key.clone();
        http.timeout_ms = self.model.timeout_ms;
        http.max_retries = self.model.max_retries;
        http.parallelism = self.model.parallelism.max(1);
        Ok(Box::new(HttpModel::new(http)))
    }
}
