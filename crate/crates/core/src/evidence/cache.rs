use std::io;
use std::path::{Path, PathBuf};

use tracing::warn;

use super::EvidenceBundle;
use crate::image::ContentHash;

/// Content-addressed bundle store: `<dir>/<image-hash>.json`.
///
/// Writes go through a temporary file and an atomic rename, so readers never
/// observe a partially written entry from this process.
#[derive(Debug, Clone)]
pub struct EvidenceCache {
    dir: PathBuf,
}

impl EvidenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, hash: &ContentHash) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    /// Missing, unreadable and corrupt entries all read as absent.
    pub fn get(&self, hash: &ContentHash) -> Option<EvidenceBundle> {
        let path = self.entry_path(hash);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return None,
            Err(e) => {
                warn!(path = %path.display(), error = %e, "unreadable evidence cache entry");
                return None;
            }
        };
        match serde_json::from_slice::<EvidenceBundle>(&bytes) {
            Ok(bundle) if bundle.image_hash == *hash => Some(bundle),
            Ok(_) => {
                warn!(path = %path.display(), "evidence cache entry belongs to another image");
                None
            }
            Err(e) => {
                warn!(path = %path.display(), error = %e, "corrupt evidence cache entry ignored");
                None
            }
        }
    }

    pub fn put(&self, bundle: &EvidenceBundle) -> io::Result<PathBuf> {
        std::fs::create_dir_all(&self.dir)?;
        let path = self.entry_path(&bundle.image_hash);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        serde_json::to_writer_pretty(&mut tmp, bundle)?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(path)
    }

    pub fn list(&self) -> io::Result<Vec<ContentHash>> {
        let entries = match std::fs::read_dir(&self.dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        let mut hashes = Vec::new();
        for entry in entries {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(stem) = name.strip_suffix(".json")
                && let Ok(hash) = stem.parse()
            {
                hashes.push(hash);
            }
        }
        hashes.sort();
        Ok(hashes)
    }

    pub fn remove(&self, hash: &ContentHash) -> io::Result<bool> {
        match std::fs::remove_file(self.entry_path(hash)) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(e),
        }
    }

    /// Removes every entry; returns how many were deleted.
    pub fn clear(&self) -> io::Result<usize> {
        let hashes = self.list()?;
        for hash in &hashes {
            self.remove(hash)?;
        }
        Ok(hashes.len())
    }
}
