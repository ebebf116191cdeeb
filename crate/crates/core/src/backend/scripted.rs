use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{BackendError, ChatBackend, ChatRequest, ChatResponse, Usage, approximate_tokens, text_tokens};

/// Every request a scripted backend received, in arrival order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CallLog {
    pub requests: Vec<ChatRequest>,
}

impl CallLog {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        std::fs::write(path, json)
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        Ok(serde_json::from_slice(&bytes)?)
    }
}

fn scripted_usage(request: &ChatRequest, text: &str, latency_secs: f64) -> Usage {
    Usage {
        model_id: request.model_id.clone(),
        prompt_tokens: approximate_tokens(request),
        completion_tokens: text_tokens(text),
        latency_secs,
    }
}

#[derive(Debug)]
struct Script {
    responses: Vec<String>,
    served: usize,
    log: CallLog,
}

/// Replays a fixed list of responses in call order.
///
/// Calls are serialized through an internal lock, so concurrent callers
/// observe a total order that matches the call log.
#[derive(Debug)]
pub struct ScriptedBackend {
    name: String,
    latency_secs: f64,
    state: Mutex<Script>,
}

impl ScriptedBackend {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Result<Self, BackendError> {
        let responses: Vec<String> = responses.into_iter().map(Into::into).collect();
        if responses.is_empty() {
            return Err(BackendError::InvalidRequest(
                "script must contain at least one response".into(),
            ));
        }
        Ok(Self {
            name: "scripted".into(),
            latency_secs: 0.0,
            state: Mutex::new(Script {
                responses,
                served: 0,
                log: CallLog::default(),
            }),
        })
    }

    /// Reported per-call latency. Defaults to zero so that runs are reproducible.
    pub fn with_latency(mut self, secs: f64) -> Self {
        self.latency_secs = secs.max(0.0);
        self
    }

    pub fn call_log(&self) -> CallLog {
        self.state.lock().expect("script lock poisoned").log.clone()
    }

    pub fn calls(&self) -> usize {
        self.state.lock().expect("script lock poisoned").log.len()
    }

    pub fn remaining(&self) -> usize {
        let s = self.state.lock().expect("script lock poisoned");
        s.responses.len() - s.served
    }
}

#[async_trait]
impl ChatBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.name
    }

    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let mut state = self.state.lock().expect("script lock poisoned");
        state.log.requests.push(request.clone());
        request.validate()?;
        let Some(text) = state.responses.get(state.served).cloned() else {
            return Err(BackendError::ScriptExhausted { served: state.served });
        };
        state.served += 1;
        Ok(ChatResponse {
            usage: scripted_usage(request, &text, self.latency_secs),
            text,
        })
    }
}

type Responder = dyn Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync;

/// Computes each response from the request. Handy for oracle agents whose
/// answer depends on the sample being judged rather than on call order.
pub struct FnBackend {
    name: String,
    responder: Box<Responder>,
    log: Mutex<CallLog>,
}

impl FnBackend {
    pub fn new<F>(name: impl Into<String>, responder: F) -> Self
    where
        F: Fn(&ChatRequest) -> Result<String, BackendError> + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            responder: Box::new(responder),
            log: Mutex::new(CallLog::default()),
        }
    }

    pub fn call_log(&self) -> CallLog {
        self.log.lock().expect("log lock poisoned").clone()
    }

    pub fn calls(&self) -> usize {
        self.log.lock().expect("log lock poisoned").len()
    }
}

impl std::fmt::Debug for FnBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnBackend").field("name", &self.name).finish()
    }
}

#[async_trait]
impl ChatBackend for FnBackend {
    fn name(&self) -> &str {
        &self.name
    }

    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.log
            .lock()
            .expect("log lock poisoned")
            .requests
            .push(request.clone());
        request.validate()?;
        let text = (self.responder)(request)?;
        Ok(ChatResponse {
            usage: scripted_usage(request, &text, 0.0),
            text,
        })
    }
}
