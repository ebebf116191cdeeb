//! Reverse image search, page extraction, English filtering and
//! summarization, with a content-addressed bundle cache.

mod cache;
mod extract;
mod language;
mod provider;
mod summarize;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use futures::future::join_all;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info};

pub use cache::EvidenceCache;
pub use extract::{decode_entities, extract_article_text};
pub use language::{
    ENGLISH_STOPWORDS, LanguageDetector, MIN_STOPWORD_RATIO, StopwordDetector, UNKNOWN, detect_language, stopword_ratio,
};
pub use provider::{
    BING_VISUAL_SEARCH_URL, BING_WEB_SEARCH_URL, ENV_SEARCH_API_KEY, EchoTextSearch, FixtureProvider, HttpSearchConfig,
    HttpSearchProvider, PageFetcher, ReverseImageSearch, SearchError, SearchHit, StaticProvider, TextSearch,
    normalize_ranks, parse_visual_search, parse_web_search, sha256_hex, text_search,
};
pub use summarize::{CHUNK_CHARS, DEFAULT_SUMMARY_CAP, Summaries, Summarizer, chunk_text, truncate_at_sentence};

use crate::backend::{BackendError, ChatBackend, Usage};
use crate::clock::{Clock, SystemClock};
use crate::image::{ContentHash, ImageRef};

pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Error)]
pub enum EvidenceError {
    #[error("invalid retrieval config: {0}")]
    Config(String),
    #[error("reverse image search failed: {0}")]
    Search(#[from] SearchError),
    #[error("summarization failed: {0}")]
    Summarize(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub top_k: usize,
    pub timeout_secs: u64,
    pub cache_dir: Option<PathBuf>,
    pub summary_cap: usize,
    pub summarizer_model: String,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            timeout_secs: 30,
            cache_dir: None,
            summary_cap: DEFAULT_SUMMARY_CAP,
            summarizer_model: "gpt-4o".into(),
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), EvidenceError> {
        if self.top_k == 0 {
            return Err(EvidenceError::Config("top_k must be at least 1".into()));
        }
        if self.timeout_secs == 0 {
            return Err(EvidenceError::Config("timeout_secs must be positive".into()));
        }
        if self.summarizer_model.trim().is_empty() {
            return Err(EvidenceError::Config("summarizer_model must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FetchStatus {
    Ok,
    FetchFailed,
    ExtractFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageText {
    pub page_url: String,
    pub extracted_text: String,
    pub detected_language: String,
    pub fetch_status: FetchStatus,
}

impl PageText {
    fn failed(page_url: &str, status: FetchStatus) -> Self {
        Self {
            page_url: page_url.to_string(),
            extracted_text: String::new(),
            detected_language: UNKNOWN.to_string(),
            fetch_status: status,
        }
    }
}

/// What happened to one fetched page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageOutcome {
    Summarized,
    FilteredNonEnglish,
    FetchFailed,
    ExtractFailed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageRecord {
    pub rank: usize,
    pub page_url: String,
    pub fetch_status: FetchStatus,
    pub detected_language: String,
    pub outcome: PageOutcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub provider_id: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    /// Hits the provider returned before the top-k cut.
    pub hits_returned: usize,
    /// One entry per fetched page, in rank order.
    pub pages: Vec<PageRecord>,
}

impl Provenance {
    pub fn count(&self, outcome: PageOutcome) -> usize {
        self.pages.iter().filter(|p| p.outcome == outcome).count()
    }
}

/// Summarized evidence for one image.
///
/// `hits_used` lists only pages whose text survived fetching, extraction and
/// the English filter; every fetched page appears in `provenance.pages`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub image_hash: ContentHash,
    pub hits_used: Vec<SearchHit>,
    pub per_page_summary: Vec<String>,
    pub combined_summary: String,
    pub empty: bool,
    pub provenance: Provenance,
}

impl EvidenceBundle {
    pub fn empty(image_hash: ContentHash, provenance: Provenance) -> Self {
        Self {
            image_hash,
            hits_used: Vec::new(),
            per_page_summary: Vec::new(),
            combined_summary: String::new(),
            empty: true,
            provenance,
        }
    }

    /// Summary text for the prompt slot, or `None` when nothing was found.
    pub fn summary(&self) -> Option<&str> {
        (!self.empty).then_some(self.combined_summary.as_str())
    }

    /// Every piece of evidence text an agent could have been shown.
    pub fn texts(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.combined_summary.as_str())
            .chain(self.per_page_summary.iter().map(String::as_str))
            .filter(|s| !s.is_empty())
    }

    pub fn digest(&self, cache_hit: bool) -> EvidenceDigest {
        EvidenceDigest {
            image_hash: self.image_hash,
            empty: self.empty,
            pages: self
                .hits_used
                .iter()
                .map(|h| DigestPage {
                    rank: h.rank,
                    title: h.title.clone(),
                    page_url: h.page_url.clone(),
                })
                .collect(),
            filtered_non_english: self.provenance.count(PageOutcome::FilteredNonEnglish),
            failed_pages: self.provenance.count(PageOutcome::FetchFailed)
                + self.provenance.count(PageOutcome::ExtractFailed),
            summary: self.combined_summary.clone(),
            cache_hit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigestPage {
    pub rank: usize,
    pub title: String,
    pub page_url: String,
}

/// Compact view of a bundle for event streams and reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceDigest {
    pub image_hash: ContentHash,
    pub empty: bool,
    pub pages: Vec<DigestPage>,
    pub filtered_non_english: usize,
    pub failed_pages: usize,
    pub summary: String,
    pub cache_hit: bool,
}

#[derive(Debug, Clone)]
pub struct BuiltEvidence {
    pub bundle: EvidenceBundle,
    pub cache_hit: bool,
    /// Summarization calls made for this build (empty on a cache hit).
    pub usage: Vec<Usage>,
}

/// Runs the top-k hits of a reverse image search through fetch, extraction,
/// the language filter and summarization.
#[derive(Clone)]
pub struct EvidencePipeline {
    pub reverse: Arc<dyn ReverseImageSearch>,
    pub fetcher: Arc<dyn PageFetcher>,
    pub detector: Arc<dyn LanguageDetector>,
    pub cache: Option<EvidenceCache>,
    pub clock: Arc<dyn Clock>,
    pub config: RetrievalConfig,
}

impl EvidencePipeline {
    pub fn new(reverse: Arc<dyn ReverseImageSearch>, fetcher: Arc<dyn PageFetcher>, config: RetrievalConfig) -> Self {
        let cache = config.cache_dir.clone().map(EvidenceCache::new);
        Self {
            reverse,
            fetcher,
            detector: Arc::new(StopwordDetector),
            cache,
            clock: Arc::new(SystemClock),
            config,
        }
    }

    /// Fixture-backed pipeline reading canned payloads from `root`.
    pub fn from_fixtures(root: impl Into<PathBuf>, config: RetrievalConfig) -> Self {
        let provider = Arc::new(FixtureProvider::new(root));
        Self::new(provider.clone(), provider, config)
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_detector(mut self, detector: Arc<dyn LanguageDetector>) -> Self {
        self.detector = detector;
        self
    }

    pub fn with_cache(mut self, cache: Option<EvidenceCache>) -> Self {
        self.cache = cache;
        self
    }

    pub async fn reverse_search(&self, image: &ImageRef) -> Result<Vec<SearchHit>, SearchError> {
        self.reverse.search(image).await.map(normalize_ranks)
    }

    /// Fetches and extracts one page, bounded by the configured timeout.
    pub async fn fetch_page(&self, url: &str) -> (PageText, Option<String>) {
        let timeout = Duration::from_secs(self.config.timeout_secs);
        let body = match tokio::time::timeout(timeout, self.fetcher.fetch(url)).await {
            Ok(Ok(body)) => body,
            Ok(Err(e)) => return (PageText::failed(url, FetchStatus::FetchFailed), Some(e.to_string())),
            Err(_) => {
                return (
                    PageText::failed(url, FetchStatus::FetchFailed),
                    Some(format!("timed out after {}s", self.config.timeout_secs)),
                );
            }
        };
        let text = extract_article_text(&body);
        if text.trim().is_empty() {
            return (
                PageText::failed(url, FetchStatus::ExtractFailed),
                Some("no article text found".into()),
            );
        }
        let language = self.detector.detect(&text);
        (
            PageText {
                page_url: url.to_string(),
                extracted_text: text,
                detected_language: language,
                fetch_status: FetchStatus::Ok,
            },
            None,
        )
    }

    pub async fn build(&self, image: &ImageRef, backend: &dyn ChatBackend) -> Result<BuiltEvidence, EvidenceError> {
        self.config.validate()?;
        if let Some(bundle) = self.cache.as_ref().and_then(|c| c.get(&image.content_hash)) {
            debug!(hash = %image.content_hash, "evidence cache hit");
            return Ok(BuiltEvidence {
                bundle,
                cache_hit: true,
                usage: Vec::new(),
            });
        }

        let started_at = self.clock.now();
        let hits = self.reverse_search(image).await?;
        let hits_returned = hits.len();
        let top: Vec<SearchHit> = hits.into_iter().take(self.config.top_k).collect();

        let fetched = join_all(top.iter().map(|hit| self.fetch_page(&hit.page_url))).await;

        let mut records = Vec::with_capacity(top.len());
        let mut survivors: Vec<(SearchHit, String)> = Vec::new();
        for (hit, (page, note)) in top.into_iter().zip(fetched) {
            let outcome = match page.fetch_status {
                FetchStatus::FetchFailed => PageOutcome::FetchFailed,
                FetchStatus::ExtractFailed => PageOutcome::ExtractFailed,
                FetchStatus::Ok if page.detected_language != "en" => PageOutcome::FilteredNonEnglish,
                FetchStatus::Ok => PageOutcome::Summarized,
            };
            let note = match outcome {
                PageOutcome::FilteredNonEnglish => {
                    Some(format!("dropped: detected language `{}`", page.detected_language))
                }
                _ => note,
            };
            records.push(PageRecord {
                rank: hit.rank,
                page_url: hit.page_url.clone(),
                fetch_status: page.fetch_status,
                detected_language: page.detected_language,
                outcome,
                note,
            });
            if outcome == PageOutcome::Summarized {
                survivors.push((hit, page.extracted_text));
            }
        }

        let mut provenance = Provenance {
            provider_id: self.reverse.id().to_string(),
            started_at,
            finished_at: started_at,
            hits_returned,
            pages: records,
        };

        let (bundle, usage) = if survivors.is_empty() {
            provenance.finished_at = self.clock.now();
            (EvidenceBundle::empty(image.content_hash, provenance), Vec::new())
        } else {
            let texts: Vec<&str> = survivors.iter().map(|(_, t)| t.as_str()).collect();
            let summaries = Summarizer::new(backend, &self.config.summarizer_model)
                .summarize_pages(&texts, self.config.summary_cap)
                .await?;
            provenance.finished_at = self.clock.now();
            let bundle = EvidenceBundle {
                image_hash: image.content_hash,
                hits_used: survivors.into_iter().map(|(h, _)| h).collect(),
                per_page_summary: summaries.per_page,
                combined_summary: summaries.combined,
                empty: false,
                provenance,
            };
            (bundle, summaries.usage)
        };

        info!(
            hash = %image.content_hash,
            pages = bundle.hits_used.len(),
            empty = bundle.empty,
            "evidence built"
        );
        if let Some(cache) = &self.cache
            && let Err(e) = cache.put(&bundle)
        {
            tracing::warn!(error = %e, "could not write evidence cache entry");
        }
        Ok(BuiltEvidence {
            bundle,
            cache_hit: false,
            usage,
        })
    }
}
