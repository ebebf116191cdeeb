//! Chat-completion gateway.
//!
//! Every model call in the system goes through [`ChatBackend::complete`].
//! Two implementations ship with the crate: an OpenAI-compatible HTTP
//! adapter for live endpoints, and scripted backends that replay canned
//! responses for desk-scale runs and tests.

mod openai;
mod scripted;

use std::collections::BTreeMap;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::ImageRef;

pub use openai::{ENV_API_KEY, ENV_ENDPOINT, OpenAiCompatBackend, OpenAiCompatConfig};
pub use scripted::{CallLog, FnBackend, ScriptedBackend};

/// Per-sample cost reported for the full pipeline with GPT-4o, used as the
/// reference column in cost reports.
pub const REFERENCE_COST_PER_SAMPLE_USD: f64 = 0.24;

pub const DEFAULT_TEMPERATURE: f32 = 0.2;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 1024;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("empty request")]
    EmptyRequest,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("provider error (HTTP {status}) after {attempts} attempt(s): {message}")]
    Provider {
        status: u16,
        attempts: u32,
        message: String,
    },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("script exhausted after {served} responses")]
    ScriptExhausted { served: usize },
    #[error("{0}")]
    Image(#[from] crate::image::ImageError),
    #[error("{0}")]
    Other(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport { .. } => true,
            BackendError::Provider { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ContentPart {
    Text { text: String },
    Image { image: ImageRef },
}

impl ContentPart {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            ContentPart::Text { text } => Some(text),
            ContentPart::Image { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub parts: Vec<ContentPart>,
}

impl ChatMessage {
    pub fn text(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            parts: vec![ContentPart::Text { text: text.into() }],
        }
    }

    pub fn system(text: impl Into<String>) -> Self {
        Self::text(Role::System, text)
    }

    pub fn user(text: impl Into<String>) -> Self {
        Self::text(Role::User, text)
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Self::text(Role::Assistant, text)
    }

    /// User message carrying the image followed by the prompt text.
    pub fn user_with_image(image: ImageRef, text: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            parts: vec![ContentPart::Image { image }, ContentPart::Text { text: text.into() }],
        }
    }

    /// Concatenation of all text parts.
    pub fn joined_text(&self) -> String {
        self.parts
            .iter()
            .filter_map(ContentPart::as_text)
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn image_count(&self) -> usize {
        self.parts
            .iter()
            .filter(|p| matches!(p, ContentPart::Image { .. }))
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub max_output_tokens: u32,
    pub temperature: f32,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            model_id: model_id.into(),
            messages,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            temperature: DEFAULT_TEMPERATURE,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.messages.is_empty() {
            return Err(BackendError::EmptyRequest);
        }
        if self.max_output_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(
                "temperature must be a non-negative number".into(),
            ));
        }
        for (i, message) in self.messages.iter().enumerate() {
            if message.parts.is_empty() {
                return Err(BackendError::InvalidRequest(format!(
                    "message {i} has no content parts"
                )));
            }
            if message.image_count() > 1 {
                return Err(BackendError::InvalidRequest(format!(
                    "message {i} carries more than one image"
                )));
            }
            if message.role == Role::System && i != 0 {
                return Err(BackendError::InvalidRequest("system message must come first".into()));
            }
        }
        Ok(())
    }

    /// Every text part of every message, in order. Used by isolation scans.
    pub fn all_text(&self) -> String {
        self.messages
            .iter()
            .map(ChatMessage::joined_text)
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Token and latency accounting for one backend call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub model_id: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;

    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelPrice {
    /// USD per 1k prompt tokens.
    pub input_per_1k: f64,
    /// USD per 1k completion tokens.
    pub output_per_1k: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PriceTable {
    pub models: BTreeMap<String, ModelPrice>,
}

#[derive(Debug, Error, PartialEq)]
pub enum PriceError {
    #[error("no price configured for model {0}")]
    MissingModel(String),
    #[error("negative price for model {0}")]
    Negative(String),
}

impl PriceTable {
    pub fn with(mut self, model: impl Into<String>, input_per_1k: f64, output_per_1k: f64) -> Self {
        self.models.insert(
            model.into(),
            ModelPrice {
                input_per_1k,
                output_per_1k,
            },
        );
        self
    }

    pub fn validate(&self) -> Result<(), PriceError> {
        for (model, price) in &self.models {
            if !(price.input_per_1k >= 0.0 && price.output_per_1k >= 0.0) {
                return Err(PriceError::Negative(model.clone()));
            }
        }
        Ok(())
    }

    pub fn get(&self, model: &str) -> Result<ModelPrice, PriceError> {
        self.models
            .get(model)
            .copied()
            .ok_or_else(|| PriceError::MissingModel(model.to_string()))
    }
}

/// Sums `prompt × input + completion × output` per 1k tokens over all calls.
pub fn estimate_cost<'a>(usage: impl IntoIterator<Item = &'a Usage>, prices: &PriceTable) -> Result<f64, PriceError> {
    let mut total = 0.0;
    for u in usage {
        let price = prices.get(&u.model_id)?;
        total +=
            (u.prompt_tokens as f64 * price.input_per_1k + u.completion_tokens as f64 * price.output_per_1k) / 1000.0;
    }
    Ok(total)
}

/// Rough token count used by offline backends: one token per four
/// characters of text, plus a flat 85 tokens per image.
pub fn approximate_tokens(request: &ChatRequest) -> u64 {
    let mut tokens = 0u64;
    for message in &request.messages {
        for part in &message.parts {
            tokens += match part {
                ContentPart::Text { text } => text_tokens(text),
                ContentPart::Image { .. } => 85,
            };
        }
    }
    tokens
}

pub fn text_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}
