use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Args;
use ooc_core::debate::DEFAULT_MODEL;
use ooc_core::evidence::{EvidenceCache, EvidencePipeline};
use ooc_service::{AppState, ENV_STATE_DIR, Engines, ServiceConfig, serve};
use tracing::warn;

use crate::config::FileConfig;
use crate::engine::{self, EngineArgs};

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const ENV_TOKEN: &str = "OOC_TOKEN";

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Address to listen on
    #[arg(long, value_name = "ADDR")]
    pub bind: Option<String>,
    /// Bearer token required on every request except /health
    #[arg(long, value_name = "TOKEN")]
    pub token: Option<String>,
    /// Persist sessions and studies here (default: in memory)
    #[arg(long, value_name = "DIR")]
    pub state_dir: Option<PathBuf>,
    /// Seconds a human slot waits before the turn is skipped
    #[arg(long, value_name = "SECS")]
    pub human_timeout: Option<u64>,
    /// Default model id for new sessions
    #[arg(long, value_name = "ID")]
    pub model: Option<String>,
    /// Never attach an evidence pipeline
    #[arg(long)]
    pub no_retrieval: bool,
    #[command(flatten)]
    pub engine: EngineArgs,
}

pub async fn run(args: ServeArgs, file: FileConfig) -> Result<ExitCode> {
    let section = &file.serve;
    let backend = engine::backend(&args.engine, &file)?;
    let mut engines = Engines::new(backend);
    let retrieval = !args.no_retrieval && file.retrieval.enabled.unwrap_or(true);
    match engine::providers(&args.engine, &file) {
        Ok(p) => {
            if retrieval {
                let config = engine::retrieval_config(&args.engine, &file)?;
                let cache = config.cache_dir.clone().map(EvidenceCache::new);
                engines = engines.with_evidence(EvidencePipeline::new(p.reverse, p.fetcher, config).with_cache(cache));
            }
            engines = engines.with_text_search(p.text);
        }
        Err(e) => warn!("search unavailable, sessions run without evidence: {e:#}"),
    }

    let config = ServiceConfig {
        state_dir: args
            .state_dir
            .or_else(|| section.state_dir.clone())
            .or_else(|| std::env::var_os(ENV_STATE_DIR).map(PathBuf::from)),
        token: args
            .token
            .or_else(|| section.token.clone())
            .or_else(|| std::env::var(ENV_TOKEN).ok()),
        human_timeout: args
            .human_timeout
            .or(section.human_timeout_secs)
            .map_or(ooc_service::hub::DEFAULT_HUMAN_TIMEOUT, Duration::from_secs),
        default_model: args
            .model
            .or_else(|| file.debate.model.clone())
            .unwrap_or_else(|| DEFAULT_MODEL.into()),
        prices: file.prices.clone(),
    };
    let state = AppState::open(config, engines)?;

    let bind = args
        .bind
        .or_else(|| section.bind.clone())
        .unwrap_or_else(|| DEFAULT_BIND.into());
    let listener = tokio::net::TcpListener::bind(&bind)
        .await
        .with_context(|| format!("cannot bind {bind}"))?;
    let addr = listener.local_addr()?;
    println!("listening on http://{addr}");
    std::io::stdout().flush()?;
    serve(listener, state).await?;
    Ok(ExitCode::SUCCESS)
}
