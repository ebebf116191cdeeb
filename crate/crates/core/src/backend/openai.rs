//! OpenAI-compatible `/chat/completions` adapter.

use std::time::{Duration, Instant};

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::{Value, json};
use tracing::{debug, warn};

use super::{BackendError, ChatBackend, ChatMessage, ChatRequest, ChatResponse, ContentPart, Role, Usage};
use crate::image::{ImageSource, data_url};

pub const ENV_ENDPOINT: &str = "MODEL_ENDPOINT";
pub const ENV_API_KEY: &str = "MODEL_API_KEY";

#[derive(Debug, Clone)]
pub struct OpenAiCompatConfig {
    /// Base URL (e.g. `https://api.openai.com/v1`) or the full
    /// `.../chat/completions` URL.
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_attempts: u32,
    pub backoff_base: Duration,
}

impl OpenAiCompatConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key: None,
            timeout: Duration::from_secs(120),
            max_attempts: 3,
            backoff_base: Duration::from_secs(1),
        }
    }

    /// Reads `MODEL_ENDPOINT` and `MODEL_API_KEY`.
    pub fn from_env() -> Option<Self> {
        let endpoint = std::env::var(ENV_ENDPOINT).ok()?;
        let mut config = Self::new(endpoint);
        config.api_key = std::env::var(ENV_API_KEY).ok();
        Some(config)
    }

    fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }
}

pub struct OpenAiCompatBackend {
    config: OpenAiCompatConfig,
    client: reqwest::Client,
}

impl OpenAiCompatBackend {
    pub fn new(config: OpenAiCompatConfig) -> Result<Self, BackendError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Other(e.to_string()))?;
        Ok(Self { config, client })
    }

    async fn attempt(&self, body: &Value) -> Result<ChatResponseBody, BackendError> {
        let mut builder = self.client.post(self.config.url()).json(body);
        if let Some(key) = &self.config.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().await.map_err(|e| BackendError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        let status = response.status();
        let raw = response.text().await.map_err(|e| BackendError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(BackendError::Provider {
                status: status.as_u16(),
                attempts: 1,
                message: provider_message(&raw),
            });
        }
        serde_json::from_str(&raw).map_err(|e| BackendError::MalformedResponse(format!("{e}: {}", truncate(&raw, 200))))
    }
}

fn provider_message(raw: &str) -> String {
    serde_json::from_str::<Value>(raw)
        .ok()
        .and_then(|v| v["error"]["message"].as_str().map(str::to_string))
        .unwrap_or_else(|| truncate(raw, 500).to_string())
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

fn with_attempts(err: BackendError, n: u32) -> BackendError {
    match err {
        BackendError::Transport { message, .. } => BackendError::Transport { attempts: n, message },
        BackendError::Provider { status, message, .. } => BackendError::Provider {
            status,
            attempts: n,
            message,
        },
        other => other,
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponseBody {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<UsageBody>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Debug, Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct UsageBody {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

fn wire_message(message: &ChatMessage) -> Result<Value, BackendError> {
    if message.image_count() == 0 {
        return Ok(json!({
            "role": role_name(message.role),
            "content": message.joined_text(),
        }));
    }
    let mut parts = Vec::with_capacity(message.parts.len());
    for part in &message.parts {
        parts.push(match part {
            ContentPart::Text { text } => json!({ "type": "text", "text": text }),
            ContentPart::Image { image } => {
                let url = match &image.source {
                    ImageSource::Url { url } => url.clone(),
                    _ => data_url(&image.read_bytes()?),
                };
                json!({ "type": "image_url", "image_url": { "url": url } })
            }
        });
    }
    Ok(json!({ "role": role_name(message.role), "content": parts }))
}

/// Request body in OpenAI chat-completions wire format.
pub fn wire_body(request: &ChatRequest) -> Result<Value, BackendError> {
    let messages = request
        .messages
        .iter()
        .map(wire_message)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(json!({
        "model": request.model_id,
        "messages": messages,
        "max_tokens": request.max_output_tokens,
        "temperature": request.temperature,
    }))
}

#[async_trait]
impl ChatBackend for OpenAiCompatBackend {
    fn name(&self) -> &str {
        "openai-compatible"
    }

    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        let body = wire_body(request)?;
        let max_attempts = self.config.max_attempts.max(1);
        let mut attempt = 0;
        loop {
            attempt += 1;
            let started = Instant::now();
            match self.attempt(&body).await {
                Ok(parsed) => {
                    let latency_secs = started.elapsed().as_secs_f64();
                    let text = parsed
                        .choices
                        .into_iter()
                        .next()
                        .and_then(|c| c.message.content)
                        .ok_or_else(|| BackendError::MalformedResponse("no choices in response".into()))?;
                    let usage = parsed.usage.unwrap_or(UsageBody {
                        prompt_tokens: 0,
                        completion_tokens: 0,
                    });
                    debug!(model = %request.model_id, attempt, latency_secs, "completion ok");
                    return Ok(ChatResponse {
                        text,
                        usage: Usage {
                            model_id: request.model_id.clone(),
                            prompt_tokens: usage.prompt_tokens,
                            completion_tokens: usage.completion_tokens,
                            latency_secs,
                        },
                    });
                }
                Err(err) if err.is_retryable() && attempt < max_attempts => {
                    let delay = self.config.backoff_base * 2u32.pow(attempt - 1);
                    warn!(attempt, ?delay, error = %err, "retrying chat completion");
                    tokio::time::sleep(delay).await;
                }
                Err(err) => return Err(with_attempts(err, attempt)),
            }
        }
    }
}
