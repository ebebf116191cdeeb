#![allow(dead_code)]

use std::sync::Arc;

use ooc_core::backend::{ChatBackend, ChatRequest, ScriptedBackend};
use ooc_core::clock::LogicalClock;
use ooc_core::dataset::ImageTextPair;
use ooc_core::debate::DebateRuntime;
use ooc_core::image::ImageRef;

pub const CAPTION: &str = "Protesters gather outside parliament in London in March 2019.";

pub fn yes(text: &str) -> String {
    format!("{text}\nIS THIS MISINFORMATION? YES")
}

pub fn no(text: &str) -> String {
    format!("{text}\nIS THIS MISINFORMATION? NO")
}

pub fn pair() -> ImageTextPair {
    ImageTextPair::new(ImageRef::from_bytes(b"\x89PNG\r\n\x1a\nfake-image".to_vec()), CAPTION)
}

pub fn scripted<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Arc<ScriptedBackend> {
    Arc::new(ScriptedBackend::new(responses).expect("non-empty script"))
}

pub fn runtime(backend: Arc<dyn ChatBackend>) -> DebateRuntime {
    DebateRuntime::new(backend).with_clock(Arc::new(LogicalClock::starting_at(1_700_000_000)))
}

/// Concatenated text of every message in a request.
pub fn request_text(request: &ChatRequest) -> String {
    request.all_text()
}

/// Last user message of a request: the prompt rendered for that turn.
pub fn last_prompt(request: &ChatRequest) -> String {
    request.messages.last().map(|m| m.joined_text()).unwrap_or_default()
}

pub fn bundle(summary: &str) -> ooc_core::evidence::EvidenceBundle {
    use ooc_core::evidence::{EvidenceBundle, Provenance, SearchHit};
    let at = chrono::DateTime::from_timestamp(1_700_000_000, 0).unwrap();
    EvidenceBundle {
        image_hash: pair().image.content_hash,
        hits_used: vec![SearchHit {
            page_url: "https://news.example/a".into(),
            title: "Story".into(),
            rank: 1,
            snippet: String::new(),
        }],
        per_page_summary: vec![summary.to_string()],
        combined_summary: summary.to_string(),
        empty: false,
        provenance: Provenance {
            provider_id: "test".into(),
            started_at: at,
            finished_at: at,
            hits_returned: 1,
            pages: Vec::new(),
        },
    }
}

pub mod synthetic {
    use std::collections::{BTreeMap, HashSet};
    use std::path::{Path, PathBuf};
    use std::sync::Arc;

    use ooc_core::backend::{BackendError, FnBackend};
    use ooc_core::dataset::{
        Label, MANIFEST_SCHEMA_VERSION, ManifestHeader, ManifestRecord, Sample, Split, load_manifest, write_manifest,
    };

    pub fn sample_id(i: usize) -> String {
        format!("sample-{i:03}")
    }

    /// Even indices are falsified.
    pub fn label_of(i: usize) -> Label {
        if i.is_multiple_of(2) {
            Label::Falsified
        } else {
            Label::Pristine
        }
    }

    /// Writes `n` images and a test-split manifest under `dir`.
    pub fn dataset(dir: &Path, n: usize) -> (PathBuf, Vec<Sample>) {
        std::fs::create_dir_all(dir.join("images")).unwrap();
        let records: Vec<ManifestRecord> = (0..n)
            .map(|i| {
                let rel = format!("images/{i:03}.jpg");
                std::fs::write(dir.join(&rel), format!("\u{ff}\u{d8}image-{i}")).unwrap();
                ManifestRecord {
                    id: sample_id(i),
                    image_path: rel,
                    caption: format!("Caption for {} taken at a city rally.", sample_id(i)),
                    label: label_of(i),
                    split: Split::Test,
                }
            })
            .collect();
        let header = ManifestHeader {
            schema_version: MANIFEST_SCHEMA_VERSION,
            split_sizes: BTreeMap::from([(Split::Test, n)]),
        };
        let path = dir.join("manifest.jsonl");
        write_manifest(&path, Some(&header), &records).unwrap();
        let samples = load_manifest(&path, Split::Test, dir).unwrap();
        (path, samples)
    }

    /// Index of the sample a request is about.
    pub fn index_in(text: &str) -> Option<usize> {
        let at = text.find("sample-")? + "sample-".len();
        text[at..at + 3].parse().ok()
    }

    /// Every agent answers correctly except on `wrong` samples, where all
    /// agents give the opposite verdict. Samples in `failing` error out.
    pub fn oracle(wrong: HashSet<usize>, failing: HashSet<usize>) -> Arc<FnBackend> {
        Arc::new(FnBackend::new("oracle", move |req| {
            let text = req.all_text();
            let Some(i) = index_in(&text) else {
                return Ok("A summary.".into());
            };
            if failing.contains(&i) {
                return Err(BackendError::Transport {
                    attempts: 3,
                    message: "connection reset".into(),
                });
            }
            let says_yes = label_of(i).is_misinformation() != wrong.contains(&i);
            Ok(if says_yes {
                super::yes("The caption conflicts with the scene.")
            } else {
                super::no("The caption fits the scene.")
            })
        }))
    }
}
