use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use ooc_core::dataset::{DatasetError, Sample, Split, default_image_root, load_manifest};
use ooc_core::debate::DebateConfig;
use ooc_core::eval::{
    ComponentRow, EvalError, EvalHarness, EvalOutcome, RunConfig, Scores, ablation_grid, component_table,
};
use tracing::info;

use crate::config::FileConfig;
use crate::engine::{self, DebateArgs, EngineArgs, Engines};

const DEFAULT_OUT: &str = "ooc-eval";

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSONL manifest of labelled samples
    #[arg(long, value_name = "PATH")]
    pub manifest: PathBuf,
    /// train, val or test
    #[arg(long, value_name = "NAME")]
    pub split: Option<Split>,
    /// Directory that relative image paths resolve against
    #[arg(long, value_name = "DIR")]
    pub image_root: Option<PathBuf>,
    /// Evaluate a stratified subset of this size
    #[arg(long, value_name = "N")]
    pub limit: Option<usize>,
    /// Seed for subset selection
    #[arg(long, value_name = "S")]
    pub seed: Option<u64>,
    /// Output directory for records and reports
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Samples evaluated concurrently
    #[arg(long, value_name = "N")]
    pub jobs: Option<usize>,
    /// Keep one transcript per sample
    #[arg(long)]
    pub save_transcripts: bool,
    #[command(flatten)]
    pub debate: DebateArgs,
    #[command(flatten)]
    pub engine: EngineArgs,
}

struct Prepared {
    samples: Vec<Sample>,
    split: Split,
    run: RunConfig,
}

fn prepare(args: &EvalArgs, file: &FileConfig, debate: DebateConfig) -> Result<Prepared> {
    let section = &file.eval;
    let split = match (args.split, &section.split) {
        (Some(s), _) => s,
        (None, Some(name)) => name.parse().map_err(anyhow::Error::msg).context("[eval] split")?,
        (None, None) => Split::Test,
    };
    let image_root = args
        .image_root
        .clone()
        .or_else(|| section.image_root.clone())
        .unwrap_or_else(|| default_image_root(&args.manifest));
    let samples = load_manifest(&args.manifest, split, &image_root)
        .with_context(|| format!("cannot load manifest {}", args.manifest.display()))?;

    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let mut run = RunConfig::new(debate, out);
    run.limit = args.limit.or(section.limit);
    run.seed = args.seed.or(section.seed).unwrap_or(0);
    run.jobs = args.jobs.or(section.jobs).unwrap_or(1);
    run.save_transcripts = args.save_transcripts || section.save_transcripts.unwrap_or(false);
    run.validate()?;
    if let Some(n) = run.limit.filter(|&n| n > samples.len()) {
        return Err(DatasetError::SubsetTooLarge {
            requested: n,
            available: samples.len(),
        })
        .with_context(|| format!("--limit too large for the {} split", split.name()));
    }
    Ok(Prepared { samples, split, run })
}

async fn execute(harness: EvalHarness, prepared: &Prepared, run: &RunConfig) -> Result<EvalOutcome> {
    let outcome = harness.run_eval(&prepared.samples, run).await.map_err(|e| match e {
        EvalError::Dataset(d) => anyhow::Error::new(d).context(format!("{} split", prepared.split.name())),
        other => other.into(),
    })?;
    if outcome.resumed > 0 {
        info!(
            resumed = outcome.resumed,
            "skipped samples already in {}",
            outcome.records_path.display()
        );
    }
    Ok(outcome)
}

fn harness(engines: &Engines, file: &FileConfig, retrieval: bool) -> EvalHarness {
    let mut harness = EvalHarness::new(engines.runtime());
    if let (true, Some(p)) = (retrieval, &engines.pipeline) {
        harness = harness.with_evidence(p.clone());
    }
    if let Some(prices) = &file.prices {
        harness = harness.with_prices(prices.clone());
    }
    harness
}

pub async fn run_eval(args: EvalArgs, file: FileConfig) -> Result<ExitCode> {
    let retrieval = engine::retrieval_enabled(&args.debate, &file);
    let debate = engine::debate_config(&args.debate, &file, retrieval)?;
    let prepared = prepare(&args, &file, debate)?;
    let engines = Engines::build(&args.engine, &file, &prepared.run.debate, engine::clock(None))?;
    let outcome = execute(harness(&engines, &file, retrieval), &prepared, &prepared.run).await?;
    print!("{}", outcome.text);
    eprintln!("records: {}", outcome.records_path.display());
    Ok(ExitCode::SUCCESS)
}

pub async fn run_ablation(args: EvalArgs, file: FileConfig) -> Result<ExitCode> {
    let debate = engine::debate_config(&args.debate, &file, true)?;
    let prepared = prepare(&args, &file, debate)?;
    let grid = ablation_grid(&prepared.run);
    let engines = Engines::build(&args.engine, &file, &prepared.run.debate, engine::clock(None))?;

    let mut rows = Vec::new();
    for row in &grid {
        let outcome = execute(harness(&engines, &file, row.retrieval), &prepared, &row.config).await?;
        println!("## {}\n", row.config.output_dir.display());
        println!("{}", outcome.text);
        rows.push(ComponentRow {
            model_id: row.model_id().to_string(),
            retrieval: row.retrieval,
            debate: row.debate,
            scores: Scores::from(&outcome.report),
        });
    }
    let table = component_table(&rows);
    let path = prepared.run.output_dir.join("components.md");
    std::fs::write(&path, &table).with_context(|| format!("cannot write {}", path.display()))?;
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}
