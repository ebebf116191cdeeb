//! Turns flags plus the config file into a debate config, a chat backend
//! and search providers. Nothing here touches the network.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result, bail};
use clap::Args;
use ooc_core::backend::{ChatBackend, ENV_API_KEY, ENV_ENDPOINT, OpenAiCompatBackend, OpenAiCompatConfig};
use ooc_core::clock::{Clock, LogicalClock, SystemClock};
use ooc_core::debate::{DEFAULT_MODEL, DEFAULT_ROUNDS, DebateConfig, DebateRuntime, DebateStrategy};
use ooc_core::evidence::{
    ENV_SEARCH_API_KEY, EvidenceCache, EvidencePipeline, FixtureProvider, HttpSearchConfig, HttpSearchProvider,
    PageFetcher, RetrievalConfig, ReverseImageSearch, TextSearch,
};

use crate::config::FileConfig;
use crate::script::Script;

pub const ENV_CACHE_DIR: &str = "OOC_CACHE_DIR";
/// Logical clocks for seeded runs start here (2024-01-01T00:00:00Z) plus the seed.
const SEEDED_EPOCH: i64 = 1_704_067_200;

#[derive(Debug, Clone, Default, Args)]
pub struct DebateArgs {
    /// async_human_framing, async_ai_framing, judged, actor_skeptic or disambiguation
    #[arg(long, value_name = "NAME")]
    pub strategy: Option<DebateStrategy>,
    /// Debate rounds after the initial opinions (0 = opinions only)
    #[arg(long, value_name = "K")]
    pub rounds: Option<u32>,
    /// Number of debating agents
    #[arg(long, value_name = "N")]
    pub agents: Option<usize>,
    /// Model id sent to the backend
    #[arg(long, value_name = "ID")]
    pub model: Option<String>,
    /// Skip reverse image search evidence
    #[arg(long)]
    pub no_retrieval: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EngineArgs {
    /// openai (any OpenAI-compatible endpoint) or scripted
    #[arg(long, value_name = "NAME")]
    pub backend: Option<String>,
    /// Response script for the scripted backend
    #[arg(long, value_name = "FILE")]
    pub script: Option<PathBuf>,
    /// Serve search results and pages from a fixture directory
    #[arg(long, value_name = "DIR")]
    pub fixtures: Option<PathBuf>,
    /// Evidence cache directory
    #[arg(long, value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
}

pub fn debate_config(args: &DebateArgs, file: &FileConfig, retrieval: bool) -> Result<DebateConfig> {
    let section = &file.debate;
    let strategy = match (args.strategy, &section.strategy) {
        (Some(s), _) => s,
        (None, Some(name)) => name.parse().map_err(anyhow::Error::msg).context("[debate] strategy")?,
        (None, None) => DebateStrategy::AsyncHumanFraming,
    };
    let agents = args.agents.or(section.agents).unwrap_or(2);
    let rounds = args.rounds.or(section.rounds).unwrap_or(DEFAULT_ROUNDS);
    let model = args
        .model
        .clone()
        .or_else(|| section.model.clone())
        .unwrap_or_else(|| DEFAULT_MODEL.into());
    let mut config = DebateConfig::new(strategy, agents, &model)
        .with_rounds(rounds)
        .with_evidence(retrieval);
    if let Some(t) = section.temperature {
        config.temperature = t;
    }
    if let Some(n) = section.max_output_tokens {
        config.max_output_tokens = n;
    }
    config.validate()?;
    Ok(config)
}

pub fn retrieval_enabled(args: &DebateArgs, file: &FileConfig) -> bool {
    !args.no_retrieval && file.retrieval.enabled.unwrap_or(true)
}

pub fn backend(args: &EngineArgs, file: &FileConfig) -> Result<Arc<dyn ChatBackend>> {
    let section = &file.backend;
    let script = args.script.clone().or_else(|| section.script.clone());
    let kind = args
        .backend
        .clone()
        .or_else(|| section.kind.clone())
        .unwrap_or_else(|| if script.is_some() { "scripted" } else { "openai" }.into());
    match kind.as_str() {
        "scripted" => {
            let path = script.context("the scripted backend needs --script FILE")?;
            Script::load(&path)?.into_backend()
        }
        "openai" => {
            let endpoint = section
                .endpoint
                .clone()
                .or_else(|| std::env::var(ENV_ENDPOINT).ok())
                .with_context(|| format!("no model endpoint: set {} or [backend] endpoint", ENV_ENDPOINT))?;
            let mut config = OpenAiCompatConfig::new(endpoint);
            let key_var = section.api_key_env.as_deref().unwrap_or(ENV_API_KEY);
            config.api_key = std::env::var(key_var).ok();
            if let Some(secs) = section.timeout_secs {
                config.timeout = Duration::from_secs(secs);
            }
            if let Some(n) = section.max_attempts {
                config.max_attempts = n;
            }
            Ok(Arc::new(OpenAiCompatBackend::new(config)?))
        }
        other => bail!("unknown backend `{other}` (expected openai or scripted)"),
    }
}

/// Cache directory from the flag, the config file or `OOC_CACHE_DIR`.
pub fn cache_dir(args: &EngineArgs, file: &FileConfig) -> Option<PathBuf> {
    args.cache_dir
        .clone()
        .or_else(|| file.retrieval.cache_dir.clone())
        .or_else(|| std::env::var_os(ENV_CACHE_DIR).map(PathBuf::from))
}

pub fn retrieval_config(args: &EngineArgs, file: &FileConfig) -> Result<RetrievalConfig> {
    let section = &file.retrieval;
    let mut config = RetrievalConfig::default();
    if let Some(k) = section.top_k {
        config.top_k = k;
    }
    if let Some(secs) = section.timeout_secs {
        config.timeout_secs = secs;
    }
    if let Some(cap) = section.summary_cap {
        config.summary_cap = cap;
    }
    if let Some(model) = &section.summarizer_model {
        config.summarizer_model = model.clone();
    }
    config.cache_dir = cache_dir(args, file);
    config.validate()?;
    Ok(config)
}

#[derive(Clone)]
pub struct Providers {
    pub reverse: Arc<dyn ReverseImageSearch>,
    pub fetcher: Arc<dyn PageFetcher>,
    pub text: Arc<dyn TextSearch>,
}

pub fn providers(args: &EngineArgs, file: &FileConfig) -> Result<Providers> {
    if let Some(root) = args.fixtures.clone().or_else(|| file.retrieval.fixtures.clone()) {
        if !root.is_dir() {
            bail!("fixture directory {} does not exist", root.display());
        }
        let p = Arc::new(FixtureProvider::new(root));
        return Ok(Providers {
            reverse: p.clone(),
            fetcher: p.clone(),
            text: p,
        });
    }
    let mut config = HttpSearchConfig::default();
    if config.api_key.is_none() {
        bail!("search needs {ENV_SEARCH_API_KEY} or --fixtures DIR (or pass --no-retrieval)");
    }
    if let Some(url) = &file.retrieval.visual_search_url {
        config.visual_search_url = url.clone();
    }
    if let Some(url) = &file.retrieval.web_search_url {
        config.web_search_url = url.clone();
    }
    if let Some(secs) = file.retrieval.timeout_secs {
        config.timeout = Duration::from_secs(secs);
    }
    let p = Arc::new(HttpSearchProvider::new(config)?);
    Ok(Providers {
        reverse: p.clone(),
        fetcher: p.clone(),
        text: p,
    })
}

/// A logical clock for seeded runs, the wall clock otherwise.
pub fn clock(seed: Option<u64>) -> Arc<dyn Clock> {
    match seed {
        Some(s) => Arc::new(LogicalClock::starting_at(SEEDED_EPOCH + (s % 1_000_000_000) as i64)),
        None => Arc::new(SystemClock),
    }
}

/// Everything a detection or evaluation run needs.
pub struct Engines {
    pub backend: Arc<dyn ChatBackend>,
    pub pipeline: Option<EvidencePipeline>,
    pub text_search: Option<Arc<dyn TextSearch>>,
    pub clock: Arc<dyn Clock>,
}

impl Engines {
    pub fn build(args: &EngineArgs, file: &FileConfig, debate: &DebateConfig, clock: Arc<dyn Clock>) -> Result<Self> {
        let needs_search = debate.strategy == DebateStrategy::Disambiguation;
        let backend = backend(args, file)?;
        let providers = if debate.evidence_enabled || needs_search {
            Some(providers(args, file)?)
        } else {
            None
        };
        let pipeline = match (&providers, debate.evidence_enabled) {
            (Some(p), true) => {
                let config = retrieval_config(args, file)?;
                let cache = config.cache_dir.clone().map(EvidenceCache::new);
                Some(
                    EvidencePipeline::new(p.reverse.clone(), p.fetcher.clone(), config)
                        .with_cache(cache)
                        .with_clock(clock.clone()),
                )
            }
            _ => None,
        };
        Ok(Self {
            backend,
            pipeline,
            text_search: providers.map(|p| p.text),
            clock,
        })
    }

    pub fn runtime(&self) -> DebateRuntime {
        let mut rt = DebateRuntime::new(self.backend.clone()).with_clock(self.clock.clone());
        if let Some(search) = &self.text_search {
            rt = rt.with_text_search(search.clone());
        }
        rt
    }
}
