//! `ooc`: detect out-of-context image-caption pairs from the command line.
//!
//! Exit codes: 0 on a verdict, 2 when the final verdict is unparseable,
//! 1 on any operational or usage error.

mod cache;
mod config;
mod detect;
mod engine;
mod eval;
mod script;
mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use tracing::Level;

use crate::config::FileConfig;

#[derive(Debug, Parser)]
#[command(
    name = "ooc",
    version,
    about = "Multi-agent debate detector for out-of-context image captions"
)]
struct Cli {
    /// TOML configuration file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// More log output on stderr (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Judge one image-caption pair
    Detect(detect::DetectArgs),
    /// Evaluate a labelled manifest and report accuracy, precision and recall
    Eval(eval::EvalArgs),
    /// Run the retrieval × debate component grid
    Ablate(eval::EvalArgs),
    /// Run the HTTP session and study service
    Serve(serve::ServeArgs),
    /// Inspect or clear the evidence cache
    #[command(subcommand)]
    Cache(cache::CacheCommand),
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => Level::WARN,
        1 => Level::INFO,
        _ => Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_target(false)
        .init();
}

async fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let file = FileConfig::load_optional(cli.config.as_deref())?;
    match cli.command {
        Command::Detect(args) => detect::run(args, file).await,
        Command::Eval(args) => eval::run_eval(args, file).await,
        Command::Ablate(args) => eval::run_ablation(args, file).await,
        Command::Serve(args) => serve::run(args, file).await,
        Command::Cache(cmd) => cache::run(cmd, file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::FAILURE,
            };
        }
    };
    init_logging(cli.verbose);
    let runtime = match tokio::runtime::Builder::new_multi_thread().enable_all().build() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::FAILURE;
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
