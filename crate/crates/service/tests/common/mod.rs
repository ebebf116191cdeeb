#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use ooc_core::backend::{BackendError, ChatBackend, ChatRequest, ChatResponse};
use ooc_service::{AppState, Engines, ServiceConfig, SessionEvent, router};
use serde_json::{Value, json};
use tokio::sync::Semaphore;

pub const IMAGE_B64: &str =
    "iVBORw0KGgoAAAANSUhEUgAAAAEAAAABCAYAAAAfFcSJAAAADUlEQVR42mP8z8BQDwAEhQGAhKmMIQAAAABJRU5ErkJggg==";

pub struct Server {
    pub base: String,
    pub client: reqwest::Client,
    pub state: Arc<AppState>,
    pub token: Option<String>,
}

pub async fn start(config: ServiceConfig, engines: Engines) -> Server {
    let token = config.token.clone();
    let state = AppState::open(config, engines).expect("state opens");
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = router(state.clone());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    Server {
        base: format!("http://{addr}"),
        client: reqwest::Client::new(),
        state,
        token,
    }
}

impl Server {
    fn auth(&self, rb: reqwest::RequestBuilder) -> reqwest::RequestBuilder {
        match &self.token {
            Some(t) => rb.bearer_auth(t),
            None => rb,
        }
    }

    pub async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let resp = self
            .auth(self.client.post(format!("{}{path}", self.base)).json(&body))
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn get(&self, path: &str) -> (u16, Value) {
        let resp = self
            .auth(self.client.get(format!("{}{path}", self.base)))
            .send()
            .await
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.json().await.unwrap_or(Value::Null))
    }

    pub async fn create(&self, body: Value) -> String {
        let (status, resp) = self.post("/sessions", body).await;
        assert_eq!(status, 201, "{resp}");
        resp["id"].as_str().unwrap().to_string()
    }

    /// Reads the event stream until it ends, with an optional resume point.
    pub async fn events(&self, id: &str, after: Option<u64>, last_event_id: Option<u64>) -> Vec<Frame> {
        let mut url = format!("{}/sessions/{id}/events", self.base);
        if let Some(a) = after {
            url.push_str(&format!("?after={a}"));
        }
        let mut rb = self.auth(self.client.get(url));
        if let Some(l) = last_event_id {
            rb = rb.header("Last-Event-ID", l.to_string());
        }
        let resp = rb.send().await.unwrap();
        assert_eq!(resp.status(), 200);
        read_frames(resp, usize::MAX).await
    }

    pub async fn wait_done(&self, id: &str) -> Value {
        for _ in 0..500 {
            let (_, view) = self.get(&format!("/sessions/{id}")).await;
            if view["status"] == "done" || view["status"] == "failed" {
                return view;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("session {id} did not finish");
    }

    pub async fn wait_status(&self, id: &str, status: &str) -> Value {
        for _ in 0..500 {
            let (_, view) = self.get(&format!("/sessions/{id}")).await;
            if view["status"] == status {
                return view;
            }
            tokio::time::sleep(Duration::from_millis(10)).await;
        }
        panic!("session {id} never reached {status}");
    }
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub id: u64,
    pub event: String,
    pub data: SessionEvent,
}

/// Parses SSE frames from a response body, stopping after `limit` frames.
pub async fn read_frames(mut resp: reqwest::Response, limit: usize) -> Vec<Frame> {
    let mut buf = String::new();
    let mut frames = Vec::new();
    while frames.len() < limit {
        let Some(chunk) = tokio::time::timeout(Duration::from_secs(10), resp.chunk())
            .await
            .expect("stream stalled")
            .unwrap()
        else {
            break;
        };
        buf.push_str(&String::from_utf8_lossy(&chunk));
        while let Some(end) = buf.find("\n\n") {
            let block: String = buf.drain(..end + 2).collect();
            let (mut id, mut event, mut data) = (None, None, None);
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("id:") {
                    id = Some(v.trim().parse().unwrap());
                } else if let Some(v) = line.strip_prefix("event:") {
                    event = Some(v.trim().to_string());
                } else if let Some(v) = line.strip_prefix("data:") {
                    data = Some(serde_json::from_str(v.trim()).unwrap());
                }
            }
            if let (Some(id), Some(event), Some(data)) = (id, event, data) {
                frames.push(Frame { id, event, data });
            }
        }
    }
    frames
}

pub fn kinds(frames: &[Frame]) -> Vec<&str> {
    frames.iter().map(|f| f.event.as_str()).collect()
}

pub fn request(caption: &str, config: Value) -> Value {
    json!({ "caption": caption, "image_base64": IMAGE_B64, "config": config })
}

/// Wraps a backend so each call waits for a permit from the test.
pub struct GatedBackend {
    pub inner: Arc<dyn ChatBackend>,
    pub gate: Arc<Semaphore>,
}

#[async_trait]
impl ChatBackend for GatedBackend {
    fn name(&self) -> &str {
        self.inner.name()
    }

    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.gate.acquire().await.expect("gate open").forget();
        self.inner.complete(request).await
    }
}
