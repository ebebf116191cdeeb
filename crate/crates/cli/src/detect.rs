use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result, bail};
use clap::Args;
use ooc_core::backend::estimate_cost;
use ooc_core::dataset::ImageTextPair;
use ooc_core::debate::{DebateConfig, SessionResult, TRANSCRIPT_SCHEMA_VERSION, TranscriptFile, run_session};
use ooc_core::evidence::EvidenceBundle;
use ooc_core::image::ImageRef;
use ooc_core::prompt::Verdict;

use crate::config::FileConfig;
use crate::engine::{self, DebateArgs, EngineArgs, Engines};

/// Exit status when the final verdict could not be parsed.
const EXIT_UNPARSEABLE: u8 = 2;

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Image file or http(s) URL
    #[arg(long, value_name = "PATH|URL")]
    pub image: String,
    /// Caption to check against the image
    #[arg(long, value_name = "TEXT")]
    pub caption: String,
    #[command(flatten)]
    pub debate: DebateArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Use a logical clock and a derived session id so reruns write identical transcripts
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,
    /// Write the full transcript (JSON) here
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

fn is_url(s: &str) -> bool {
    s.starts_with("http://") || s.starts_with("https://")
}

async fn load_image(locator: &str) -> Result<ImageRef> {
    if is_url(locator) {
        let client = reqwest::Client::new();
        ImageRef::fetch_url(&client, locator)
            .await
            .with_context(|| format!("cannot download image {locator}"))
    } else {
        ImageRef::from_path(locator).with_context(|| format!("cannot read image {locator}"))
    }
}

pub async fn run(args: DetectArgs, file: FileConfig) -> Result<ExitCode> {
    if args.caption.trim().is_empty() {
        bail!("--caption must not be empty");
    }
    if !is_url(&args.image) && !std::path::Path::new(&args.image).is_file() {
        bail!("cannot read image {}: no such file", args.image);
    }
    let retrieval = engine::retrieval_enabled(&args.debate, &file);
    let config = engine::debate_config(&args.debate, &file, retrieval)?;
    let clock = engine::clock(args.seed);
    let engines = Engines::build(&args.engine, &file, &config, clock.clone())?;

    let image = load_image(&args.image).await?;
    let session_id = match args.seed {
        Some(seed) => format!("seed{seed}-{}", &image.content_hash.to_hex()[..12]),
        None => uuid::Uuid::new_v4().to_string(),
    };
    let created_at = clock.now();

    let (evidence, evidence_usage) = match &engines.pipeline {
        Some(pipeline) => {
            let built = pipeline
                .build(&image, engines.backend.as_ref())
                .await
                .context("evidence retrieval failed")?;
            (Some(built.bundle), built.usage)
        }
        None => (None, Vec::new()),
    };

    let pair = ImageTextPair::new(image.clone(), args.caption.clone());
    let outcome = run_session(&pair, evidence.as_ref(), &config, &engines.runtime()).await;
    let (result, error) = match outcome {
        Ok(result) => (result, None),
        Err(e) => match e.partial() {
            Some(partial) => (partial.clone(), Some(e)),
            None => return Err(e.into()),
        },
    };
    let cost_usd = file
        .prices
        .as_ref()
        .and_then(|prices| estimate_cost(result.usage.iter().chain(&evidence_usage), prices).ok());
    let transcript = TranscriptFile {
        schema_version: TRANSCRIPT_SCHEMA_VERSION,
        session_id,
        created_at,
        image,
        caption: args.caption,
        config: config.clone(),
        evidence,
        result,
        evidence_usage,
        cost_usd,
        error: error.as_ref().map(|e| e.to_string()),
    };
    if let Some(path) = &args.out {
        transcript
            .save(path)
            .with_context(|| format!("cannot write transcript {}", path.display()))?;
    }
    if let Some(e) = error {
        return Err(anyhow::Error::new(e).context("debate failed"));
    }

    print_result(
        &config,
        transcript.evidence.as_ref(),
        &transcript.result,
        args.out.as_deref(),
        cost_usd,
    );
    Ok(match transcript.result.final_verdict {
        Verdict::Unparseable => ExitCode::from(EXIT_UNPARSEABLE),
        _ => ExitCode::SUCCESS,
    })
}

fn wire_name<T: serde::Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        _ => String::new(),
    }
}

fn print_result(
    config: &DebateConfig,
    evidence: Option<&EvidenceBundle>,
    result: &SessionResult,
    out: Option<&std::path::Path>,
    cost: Option<f64>,
) {
    for turn in &result.transcript {
        let answer = if turn.abstained {
            "abstained".to_string()
        } else {
            turn.verdict().to_string()
        };
        println!("[round {}] {}: {answer}", turn.round_index, turn.agent_id);
    }
    println!();
    println!("{}", result.explanation.trim());
    println!();
    println!(
        "strategy: {}  agents: {}  rounds used: {}/{}  decision: {}",
        config.strategy,
        config.num_agents(),
        result.rounds_used,
        config.max_rounds,
        wire_name(&result.decision_rule)
    );
    match evidence {
        None => println!("evidence: disabled"),
        Some(b) if b.empty => println!("evidence: none found"),
        Some(b) => println!("evidence: {} page(s)", b.hits_used.len()),
    }
    if !result.flags.is_empty() {
        let flags: Vec<String> = result.flags.iter().map(wire_name).collect();
        println!("flags: {}", flags.join(", "));
    }
    for warning in &result.warnings {
        println!("warning: {warning}");
    }
    println!("backend calls: {}", result.backend_calls());
    if let Some(c) = cost {
        println!("cost: ${c:.4}");
    }
    if let Some(path) = out {
        println!("transcript: {}", path.display());
    }
    println!("VERDICT: {}", result.final_verdict);
}
