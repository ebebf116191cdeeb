//! TOML configuration file.
//!
//! Every key is optional. Command-line flags override the file, the file
//! overrides environment variables, and those override built-in defaults.
//! Relative paths are resolved against the file's directory.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ooc_core::backend::PriceTable;
use serde::Deserialize;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub backend: BackendSection,
    pub debate: DebateSection,
    pub retrieval: RetrievalSection,
    pub eval: EvalSection,
    pub serve: ServeSection,
    pub prices: Option<PriceTable>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    /// `openai` or `scripted`.
    pub kind: Option<String>,
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub timeout_secs: Option<u64>,
    pub max_attempts: Option<u32>,
    pub script: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DebateSection {
    pub strategy: Option<String>,
    pub rounds: Option<u32>,
    pub agents: Option<usize>,
    pub model: Option<String>,
    pub temperature: Option<f32>,
    pub max_output_tokens: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalSection {
    pub enabled: Option<bool>,
    pub fixtures: Option<PathBuf>,
    pub top_k: Option<usize>,
    pub timeout_secs: Option<u64>,
    pub cache_dir: Option<PathBuf>,
    pub summarizer_model: Option<String>,
    pub summary_cap: Option<usize>,
    pub visual_search_url: Option<String>,
    pub web_search_url: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub split: Option<String>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub limit: Option<usize>,
    pub save_transcripts: Option<bool>,
    pub image_root: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeSection {
    pub bind: Option<String>,
    pub token: Option<String>,
    pub state_dir: Option<PathBuf>,
    pub human_timeout_secs: Option<u64>,
}

impl FileConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut config: FileConfig = toml::from_str(text)?;
        config.resolve_paths(base);
        if let Some(prices) = &config.prices {
            prices.validate()?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).with_context(|| format!("invalid config {}", path.display()))
    }

    /// Loads `path` when given, otherwise returns the empty configuration.
    pub fn load_optional(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut().filter(|p| p.is_relative()) {
                *path = base.join(&*path);
            }
        };
        fix(&mut self.backend.script);
        fix(&mut self.retrieval.fixtures);
        fix(&mut self.retrieval.cache_dir);
        fix(&mut self.eval.image_root);
        fix(&mut self.serve.state_dir);
    }
}
