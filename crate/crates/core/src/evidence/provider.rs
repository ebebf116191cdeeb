//! Search providers and page fetchers.
//!
//! Live adapters speak the Bing Visual Search / Web Search wire formats.
//! Fixture adapters read canned payloads of the same shape from disk, so both
//! paths share one parser.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::warn;

use crate::image::{ImageRef, ImageSource};

pub const ENV_SEARCH_API_KEY: &str = "SEARCH_API_KEY";
pub const BING_VISUAL_SEARCH_URL: &str = "https://api.bing.microsoft.com/v7.0/images/visualsearch";
pub const BING_WEB_SEARCH_URL: &str = "https://api.bing.microsoft.com/v7.0/search";

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("search transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("search quota exhausted: {0}")]
    Quota(String),
    #[error("search provider returned HTTP {status}: {message}")]
    Http { status: u16, message: String },
    #[error("malformed provider payload: {message}")]
    Malformed { message: String, raw: String },
    #[error("search query must not be empty")]
    EmptyQuery,
    #[error("{0}")]
    Image(#[from] crate::image::ImageError),
    #[error("{0}")]
    Other(String),
}

impl SearchError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, SearchError::Transport { .. })
            || matches!(self, SearchError::Http { status, .. } if *status >= 500)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub page_url: String,
    pub title: String,
    pub rank: usize,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub snippet: String,
}

#[async_trait]
pub trait ReverseImageSearch: Send + Sync {
    fn id(&self) -> &str;
    async fn search(&self, image: &ImageRef) -> Result<Vec<SearchHit>, SearchError>;
}

#[async_trait]
pub trait TextSearch: Send + Sync {
    fn id(&self) -> &str;
    async fn search(&self, query: &str) -> Result<Vec<SearchHit>, SearchError>;
}

#[async_trait]
pub trait PageFetcher: Send + Sync {
    /// Raw page body (usually HTML).
    async fn fetch(&self, url: &str) -> Result<String, SearchError>;
}

/// Sorts by provider rank and renumbers ranks contiguously from 1.
pub fn normalize_ranks(mut hits: Vec<SearchHit>) -> Vec<SearchHit> {
    hits.sort_by_key(|h| h.rank);
    for (i, hit) in hits.iter_mut().enumerate() {
        hit.rank = i + 1;
    }
    hits
}

fn malformed(message: impl Into<String>, raw: &str) -> SearchError {
    SearchError::Malformed {
        message: message.into(),
        raw: raw.to_string(),
    }
}

/// Pages that contain the image, from a Visual Search response body.
pub fn parse_visual_search(raw: &str) -> Result<Vec<SearchHit>, SearchError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| malformed(e.to_string(), raw))?;
    let tags = value
        .get("tags")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("missing `tags` array", raw))?;
    let mut hits: Vec<SearchHit> = Vec::new();
    for action in tags
        .iter()
        .filter_map(|t| t.get("actions").and_then(Value::as_array))
        .flatten()
    {
        if action.get("actionType").and_then(Value::as_str) != Some("PagesIncluding") {
            continue;
        }
        let pages = action
            .pointer("/data/value")
            .and_then(Value::as_array)
            .ok_or_else(|| malformed("PagesIncluding action without data.value", raw))?;
        for page in pages {
            let Some(url) = page.get("hostPageUrl").and_then(Value::as_str) else {
                continue;
            };
            if hits.iter().any(|h| h.page_url == url) {
                continue;
            }
            hits.push(SearchHit {
                page_url: url.to_string(),
                title: page.get("name").and_then(Value::as_str).unwrap_or_default().to_string(),
                rank: hits.len() + 1,
                snippet: String::new(),
            });
        }
    }
    Ok(hits)
}

/// Web results from a Web Search response body.
pub fn parse_web_search(raw: &str) -> Result<Vec<SearchHit>, SearchError> {
    let value: Value = serde_json::from_str(raw).map_err(|e| malformed(e.to_string(), raw))?;
    if !value.is_object() {
        return Err(malformed("expected a JSON object", raw));
    }
    let Some(pages) = value.pointer("/webPages/value") else {
        return Ok(Vec::new());
    };
    let pages = pages
        .as_array()
        .ok_or_else(|| malformed("webPages.value is not an array", raw))?;
    Ok(pages
        .iter()
        .filter_map(|p| {
            Some((
                p.get("url")?.as_str()?.to_string(),
                p.get("name").and_then(Value::as_str).unwrap_or_default().to_string(),
                p.get("snippet").and_then(Value::as_str).unwrap_or_default().to_string(),
            ))
        })
        .enumerate()
        .map(|(i, (page_url, title, snippet))| SearchHit {
            page_url,
            title,
            rank: i + 1,
            snippet,
        })
        .collect())
}

pub fn sha256_hex(s: &str) -> String {
    hex::encode(Sha256::digest(s.as_bytes()))
}

/// Reads canned responses from a fixture directory:
///
/// ```text
/// <root>/reverse/<image-hash>.json   visual search payloads
/// <root>/text/<sha256(query)>.json   web search payloads
/// <root>/pages/<sha256(url)>.html    page bodies
/// ```
///
/// A missing payload file means the provider found nothing.
#[derive(Debug)]
pub struct FixtureProvider {
    root: PathBuf,
    reverse_calls: AtomicUsize,
    text_calls: AtomicUsize,
}

impl FixtureProvider {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self {
            root: root.into(),
            reverse_calls: AtomicUsize::new(0),
            text_calls: AtomicUsize::new(0),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn reverse_calls(&self) -> usize {
        self.reverse_calls.load(Ordering::SeqCst)
    }

    pub fn text_calls(&self) -> usize {
        self.text_calls.load(Ordering::SeqCst)
    }

    pub fn reverse_path(&self, image: &ImageRef) -> PathBuf {
        self.root.join("reverse").join(format!("{}.json", image.content_hash))
    }

    pub fn text_path(&self, query: &str) -> PathBuf {
        self.root.join("text").join(format!("{}.json", sha256_hex(query)))
    }

    pub fn page_path(&self, url: &str) -> PathBuf {
        self.root.join("pages").join(format!("{}.html", sha256_hex(url)))
    }

    fn read_optional(path: &Path) -> Result<Option<String>, SearchError> {
        match std::fs::read_to_string(path) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(SearchError::Other(format!("{}: {e}", path.display()))),
        }
    }
}

#[async_trait]
impl ReverseImageSearch for FixtureProvider {
    fn id(&self) -> &str {
        "fixture"
    }

    async fn search(&self, image: &ImageRef) -> Result<Vec<SearchHit>, SearchError> {
        self.reverse_calls.fetch_add(1, Ordering::SeqCst);
        match Self::read_optional(&self.reverse_path(image))? {
            Some(raw) => parse_visual_search(&raw),
            None => Ok(Vec::new()),
        }
    }
}

#[async_trait]
impl TextSearch for FixtureProvider {
    fn id(&self) -> &str {
        "fixture"
    }

    async fn search(&self, query: &str) -> Result<Vec<SearchHit>, SearchError> {
        if query.trim().is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        self.text_calls.fetch_add(1, Ordering::SeqCst);
        match Self::read_optional(&self.text_path(query))? {
            Some(raw) => parse_web_search(&raw),
            None => Ok(Vec::new()),
        }
    }
}

#[async_trait]
impl PageFetcher for FixtureProvider {
    async fn fetch(&self, url: &str) -> Result<String, SearchError> {
        Self::read_optional(&self.page_path(url))?.ok_or_else(|| SearchError::Http {
            status: 404,
            message: format!("no fixture page for {url}"),
        })
    }
}

/// In-memory provider for tests: fixed hits, fixed pages, counted calls.
#[derive(Debug, Default)]
pub struct StaticProvider {
    pub hits: Vec<SearchHit>,
    pub pages: HashMap<String, String>,
    reverse_calls: AtomicUsize,
    fetched: Mutex<Vec<String>>,
}

impl StaticProvider {
    pub fn new(hits: Vec<SearchHit>, pages: HashMap<String, String>) -> Self {
        Self {
            hits,
            pages,
            ..Default::default()
        }
    }

    pub fn reverse_calls(&self) -> usize {
        self.reverse_calls.load(Ordering::SeqCst)
    }

    pub fn fetched(&self) -> Vec<String> {
        self.fetched.lock().expect("lock poisoned").clone()
    }
}

#[async_trait]
impl ReverseImageSearch for StaticProvider {
    fn id(&self) -> &str {
        "static"
    }

    async fn search(&self, _image: &ImageRef) -> Result<Vec<SearchHit>, SearchError> {
        self.reverse_calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.hits.clone())
    }
}

#[async_trait]
impl PageFetcher for StaticProvider {
    async fn fetch(&self, url: &str) -> Result<String, SearchError> {
        self.fetched.lock().expect("lock poisoned").push(url.to_string());
        self.pages.get(url).cloned().ok_or_else(|| SearchError::Http {
            status: 404,
            message: format!("no page for {url}"),
        })
    }
}

/// Text search stub that echoes the query back as the top hit.
#[derive(Debug, Default)]
pub struct EchoTextSearch {
    queries: Mutex<Vec<String>>,
}

impl EchoTextSearch {
    pub fn queries(&self) -> Vec<String> {
        self.queries.lock().expect("lock poisoned").clone()
    }
}

#[async_trait]
impl TextSearch for EchoTextSearch {
    fn id(&self) -> &str {
        "echo"
    }

    async fn search(&self, query: &str) -> Result<Vec<SearchHit>, SearchError> {
        if query.trim().is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        self.queries.lock().expect("lock poisoned").push(query.to_string());
        Ok(vec![SearchHit {
            page_url: format!("https://search.invalid/?q={}", sha256_hex(query)),
            title: format!("Results for {query}"),
            rank: 1,
            snippet: format!("Echoed search result for {query}."),
        }])
    }
}

/// Validates the query and delegates to the provider.
pub async fn text_search(provider: &dyn TextSearch, query: &str) -> Result<Vec<SearchHit>, SearchError> {
    if query.trim().is_empty() {
        return Err(SearchError::EmptyQuery);
    }
    provider.search(query).await.map(normalize_ranks)
}

#[derive(Debug, Clone)]
pub struct HttpSearchConfig {
    pub api_key: Option<String>,
    pub visual_search_url: String,
    pub web_search_url: String,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub backoff_base: Duration,
}

impl Default for HttpSearchConfig {
    fn default() -> Self {
        Self {
            api_key: std::env::var(ENV_SEARCH_API_KEY).ok(),
            visual_search_url: BING_VISUAL_SEARCH_URL.into(),
            web_search_url: BING_WEB_SEARCH_URL.into(),
            timeout: Duration::from_secs(30),
            max_attempts: 3,
            backoff_base: Duration::from_secs(1),
        }
    }
}

/// Live adapter for Bing-compatible visual and web search endpoints, plus
/// plain HTTP page fetching.
pub struct HttpSearchProvider {
    config: HttpSearchConfig,
    client: reqwest::Client,
}

impl HttpSearchProvider {
    pub fn new(config: HttpSearchConfig) -> Result<Self, SearchError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .user_agent("ooc-evidence/0.1")
            .build()
            .map_err(|e| SearchError::Other(e.to_string()))?;
        Ok(Self { config, client })
    }

    async fn send_once(&self, builder: reqwest::RequestBuilder) -> Result<String, SearchError> {
        let transport = |e: reqwest::Error| SearchError::Transport {
            attempts: 1,
            message: e.to_string(),
        };
        let response = builder.send().await.map_err(transport)?;
        let status = response.status().as_u16();
        let body = response.text().await.map_err(transport)?;
        match status {
            200..=299 => Ok(body),
            403 | 429 => Err(SearchError::Quota(body)),
            _ => Err(SearchError::Http { status, message: body }),
        }
    }

    async fn with_retries<F>(&self, make: F) -> Result<String, SearchError>
    where
        F: Fn() -> Result<reqwest::RequestBuilder, SearchError>,
    {
        let max = self.config.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.send_once(make()?).await {
                Ok(body) => return Ok(body),
                Err(e) if e.is_retryable() && attempt < max => {
                    let delay = self.config.backoff_base * 2u32.pow(attempt - 1);
                    warn!(attempt, ?delay, error = %e, "retrying search request");
                    tokio::time::sleep(delay).await;
                }
                Err(SearchError::Transport { message, .. }) => {
                    return Err(SearchError::Transport {
                        attempts: attempt,
                        message,
                    });
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn authed(&self, builder: reqwest::RequestBuilder) -> reqwest::RequestBuilder {
        match &self.config.api_key {
            Some(key) => builder.header("Ocp-Apim-Subscription-Key", key),
            None => builder,
        }
    }
}

#[async_trait]
impl ReverseImageSearch for HttpSearchProvider {
    fn id(&self) -> &str {
        "bing-visual-search"
    }

    async fn search(&self, image: &ImageRef) -> Result<Vec<SearchHit>, SearchError> {
        let bytes = match &image.source {
            ImageSource::Url { .. } => None,
            _ => Some(image.read_bytes()?),
        };
        let raw = self
            .with_retries(|| {
                let form = match (&image.source, &bytes) {
                    (ImageSource::Url { url }, _) => reqwest::multipart::Form::new().text(
                        "knowledgeRequest",
                        serde_json::json!({ "imageInfo": { "url": url } }).to_string(),
                    ),
                    (_, Some(bytes)) => reqwest::multipart::Form::new().part(
                        "image",
                        reqwest::multipart::Part::bytes(bytes.clone()).file_name("image"),
                    ),
                    (_, None) => unreachable!("local images are read above"),
                };
                Ok(self.authed(self.client.post(&self.config.visual_search_url).multipart(form)))
            })
            .await?;
        parse_visual_search(&raw).map(normalize_ranks)
    }
}

#[async_trait]
impl TextSearch for HttpSearchProvider {
    fn id(&self) -> &str {
        "bing-web-search"
    }

    async fn search(&self, query: &str) -> Result<Vec<SearchHit>, SearchError> {
        if query.trim().is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        let raw = self
            .with_retries(|| {
                Ok(self.authed(
                    self.client
                        .get(&self.config.web_search_url)
                        .query(&[("q", query), ("count", "5")]),
                ))
            })
            .await?;
        parse_web_search(&raw)
    }
}

#[async_trait]
impl PageFetcher for HttpSearchProvider {
    async fn fetch(&self, url: &str) -> Result<String, SearchError> {
        self.with_retries(|| Ok(self.client.get(url))).await
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn visual_payload(urls: &[&str]) -> String {
        let pages: Vec<Value> = urls
            .iter()
            .map(|u| serde_json::json!({ "name": format!("Title {u}"), "hostPageUrl": u }))
            .collect();
        serde_json::json!({
            "_type": "ImageKnowledge",
            "tags": [{ "displayName": "", "actions": [
                { "actionType": "VisualSearch", "data": { "value": [] } },
                { "actionType": "PagesIncluding", "data": { "value": pages } }
            ]}]
        })
        .to_string()
    }

    #[test]
    fn visual_search_keeps_pages_including_in_order() {
        let hits = parse_visual_search(&visual_payload(&["a", "b", "a", "c"])).unwrap();
        let urls: Vec<_> = hits.iter().map(|h| h.page_url.as_str()).collect();
        assert_eq!(urls, ["a", "b", "c"]);
        assert_eq!(hits.iter().map(|h| h.rank).collect::<Vec<_>>(), [1, 2, 3]);
    }

    #[test]
    fn truncated_payload_is_malformed_with_raw_attached() {
        let full = visual_payload(&["a", "b"]);
        let cut = &full[..full.len() / 2];
        match parse_visual_search(cut) {
            Err(SearchError::Malformed { raw, .. }) => assert_eq!(raw, cut),
            other => panic!("expected malformed, got {other:?}"),
        }
    }

    #[test]
    fn web_search_without_results_is_empty() {
        assert!(parse_web_search(r#"{"_type":"SearchResponse"}"#).unwrap().is_empty());
        let hits = parse_web_search(r#"{"webPages":{"value":[{"name":"N","url":"http://u","snippet":"S"}]}}"#).unwrap();
        assert_eq!(hits[0].snippet, "S");
    }

    #[test]
    fn ranks_are_renumbered() {
        let hits = normalize_ranks(vec![
            SearchHit {
                page_url: "b".into(),
                title: String::new(),
                rank: 7,
                snippet: String::new(),
            },
            SearchHit {
                page_url: "a".into(),
                title: String::new(),
                rank: 2,
                snippet: String::new(),
            },
        ]);
        assert_eq!(hits[0].page_url, "a");
        assert_eq!(hits.iter().map(|h| h.rank).collect::<Vec<_>>(), [1, 2]);
    }

    #[tokio::test]
    async fn echo_provider_and_empty_query() {
        let echo = EchoTextSearch::default();
        let hits = text_search(&echo, "rally date").await.unwrap();
        assert!(hits[0].title.contains("rally date"));
        assert!(matches!(text_search(&echo, "  ").await, Err(SearchError::EmptyQuery)));
    }

    #[tokio::test]
    async fn fixture_provider_reads_by_hash() {
        let dir = tempfile::tempdir().unwrap();
        let provider = FixtureProvider::new(dir.path());
        let image = ImageRef::from_bytes(b"img".to_vec());
        assert!(ReverseImageSearch::search(&provider, &image).await.unwrap().is_empty());
        std::fs::create_dir_all(dir.path().join("reverse")).unwrap();
        std::fs::write(provider.reverse_path(&image), visual_payload(&["u1", "u2"])).unwrap();
        let hits = ReverseImageSearch::search(&provider, &image).await.unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(provider.reverse_calls(), 2);
        assert!(provider.fetch("u1").await.is_err());
    }
}
