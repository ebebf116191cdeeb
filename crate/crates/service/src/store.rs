//! On-disk layout under the state directory.
//!
//! ```text
//! sessions/<id>/meta.json         request and config
//! sessions/<id>/events.jsonl      event log
//! sessions/<id>/transcript.json   written when the session ends
//! studies/<id>/study.json         items
//! studies/<id>/log.jsonl          answers and reveals
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use ooc_core::debate::DebateConfig;
use ooc_core::image::ImageRef;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::study::{Study, StudyEntry, StudyError};

pub const ENV_STATE_DIR: &str = "STATE_DIR";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMeta {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub caption: String,
    pub image: ImageRef,
    pub config: DebateConfig,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn session_dir(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(id)
    }

    pub fn events_path(&self, id: &str) -> PathBuf {
        self.session_dir(id).join("events.jsonl")
    }

    pub fn transcript_path(&self, id: &str) -> PathBuf {
        self.session_dir(id).join("transcript.json")
    }

    fn study_dir(&self, id: &str) -> PathBuf {
        self.root.join("studies").join(id)
    }

    pub fn save_session_meta(&self, meta: &SessionMeta) -> Result<(), StoreError> {
        let dir = self.session_dir(&meta.id);
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        write_json(&dir.join("meta.json"), meta)
    }

    pub fn load_sessions(&self) -> Result<Vec<SessionMeta>, StoreError> {
        let mut out: Vec<SessionMeta> = subdirs(&self.root.join("sessions"))?
            .into_iter()
            .filter(|d| d.join("meta.json").exists())
            .map(|d| read_json(&d.join("meta.json")))
            .collect::<Result<_, _>>()?;
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        Ok(out)
    }

    pub fn save_study(&self, study: &Study) -> Result<(), StoreError> {
        let dir = self.study_dir(&study.id);
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        write_json(&dir.join("study.json"), study)
    }

    pub fn append_study_entry(&self, study_id: &str, entry: &StudyEntry) -> Result<(), StoreError> {
        let path = self.study_dir(study_id).join("log.jsonl");
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io(&path))?;
        let mut line = serde_json::to_string(entry).expect("entry serializes");
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(io(&path))
    }

    /// Loads every study and replays its log through the ordering checks.
    pub fn load_studies(&self) -> Result<Vec<Study>, StoreError> {
        let mut out = Vec::new();
        for dir in subdirs(&self.root.join("studies"))? {
            let path = dir.join("study.json");
            if !path.exists() {
                continue;
            }
            let stored: Study = read_json(&path)?;
            let mut study = Study::new(stored.id, stored.items, stored.created_at).map_err(|e: StudyError| {
                StoreError::Corrupt {
                    path: path.clone(),
                    message: e.to_string(),
                }
            })?;
            let log = dir.join("log.jsonl");
            if log.exists() {
                let file = File::open(&log).map_err(io(&log))?;
                for (i, line) in BufReader::new(file).lines().enumerate() {
                    let line = line.map_err(io(&log))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let corrupt = |message: String| StoreError::Corrupt {
                        path: log.clone(),
                        message: format!("line {}: {message}", i + 1),
                    };
                    let entry: StudyEntry = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
                    study.apply(entry).map_err(|e| corrupt(e.to_string()))?;
                }
            }
            out.push(study);
        }
        Ok(out)
    }
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io(dir))? {
        let path = entry.map_err(io(dir))?.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let body = serde_json::to_string_pretty(value).expect("value serializes");
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, body).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let body = fs::read_to_string(path).map_err(io(path))?;
    serde_json::from_str(&body).map_err(|e| StoreError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
