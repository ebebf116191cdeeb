use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Subcommand;
use ooc_core::evidence::EvidenceCache;
use ooc_core::image::ContentHash;

use crate::config::FileConfig;
use crate::engine::{self, EngineArgs};

#[derive(Debug, Subcommand)]
pub enum CacheCommand {
    /// List cached evidence bundles
    List {
        /// Cache directory
        #[arg(long, value_name = "DIR")]
        dir: Option<PathBuf>,
    },
    /// Remove one cached bundle by image hash
    Remove {
        /// Hex SHA-256 of the image bytes
        hash: ContentHash,
        #[arg(long, value_name = "DIR")]
        dir: Option<PathBuf>,
    },
    /// Remove every cached bundle
    Clear {
        #[arg(long, value_name = "DIR")]
        dir: Option<PathBuf>,
    },
}

fn open(dir: Option<PathBuf>, file: &FileConfig) -> Result<EvidenceCache> {
    let args = EngineArgs {
        cache_dir: dir,
        ..EngineArgs::default()
    };
    let dir = engine::cache_dir(&args, file).with_context(|| {
        format!(
            "no cache directory: pass --dir, set [retrieval] cache_dir or {}",
            engine::ENV_CACHE_DIR
        )
    })?;
    Ok(EvidenceCache::new(dir))
}

pub fn run(cmd: CacheCommand, file: FileConfig) -> Result<ExitCode> {
    match cmd {
        CacheCommand::List { dir } => {
            let cache = open(dir, &file)?;
            let hashes = cache
                .list()
                .with_context(|| format!("cannot list {}", cache.dir().display()))?;
            for hash in &hashes {
                match cache.get(hash) {
                    Some(b) if b.empty => println!("{hash}  no evidence"),
                    Some(b) => println!("{hash}  {} page(s)", b.hits_used.len()),
                    None => println!("{hash}  unreadable"),
                }
            }
            println!("{} entr{}", hashes.len(), if hashes.len() == 1 { "y" } else { "ies" });
        }
        CacheCommand::Remove { hash, dir } => {
            let cache = open(dir, &file)?;
            let removed = cache
                .remove(&hash)
                .with_context(|| format!("cannot remove {}", cache.entry_path(&hash).display()))?;
            println!("{}", if removed { "removed" } else { "not cached" });
        }
        CacheCommand::Clear { dir } => {
            let cache = open(dir, &file)?;
            let n = cache
                .clear()
                .with_context(|| format!("cannot clear {}", cache.dir().display()))?;
            println!("removed {n} entr{}", if n == 1 { "y" } else { "ies" });
        }
    }
    Ok(ExitCode::SUCCESS)
}
