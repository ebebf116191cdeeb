//! Versioned on-disk transcript: one JSON file per session.

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DebateConfig, SessionResult};
use crate::backend::Usage;
use crate::evidence::EvidenceBundle;
use crate::image::ImageRef;

pub const TRANSCRIPT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("transcript JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported transcript schema version {found} (expected {TRANSCRIPT_SCHEMA_VERSION})")]
    UnsupportedVersion { found: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptFile {
    pub schema_version: u32,
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub image: ImageRef,
    pub caption: String,
    pub config: DebateConfig,
    pub evidence: Option<EvidenceBundle>,
    pub result: SessionResult,
    /// Evidence summarization calls (session calls are in `result.usage`).
    #[serde(default)]
    pub evidence_usage: Vec<Usage>,
    pub cost_usd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

impl TranscriptFile {
    pub fn to_json(&self) -> Result<String, TranscriptError> {
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        Ok(json)
    }

    pub fn from_json(json: &str) -> Result<Self, TranscriptError> {
        let probe: VersionProbe = serde_json::from_str(json)?;
        if probe.schema_version != TRANSCRIPT_SCHEMA_VERSION {
            return Err(TranscriptError::UnsupportedVersion {
                found: probe.schema_version,
            });
        }
        Ok(serde_json::from_str(json)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TranscriptError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TranscriptError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Every backend call behind this transcript, evidence first.
    pub fn all_usage(&self) -> impl Iterator<Item = &Usage> {
        self.evidence_usage.iter().chain(self.result.usage.iter())
    }
}
