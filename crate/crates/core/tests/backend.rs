use std::sync::Arc;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use ooc_core::backend::{BackendError, ChatBackend, ChatMessage, ChatRequest, OpenAiCompatBackend, OpenAiCompatConfig};
use ooc_core::image::ImageRef;
use serde_json::{Value, json};

async fn serve(app: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}/v1")
}

fn config(endpoint: &str) -> OpenAiCompatConfig {
    let mut c = OpenAiCompatConfig::new(endpoint);
    c.api_key = Some("sk-test".into());
    c.timeout = Duration::from_millis(500);
    c.backoff_base = Duration::from_millis(5);
    c
}

fn request() -> ChatRequest {
    ChatRequest::new(
        "gpt-4o",
        vec![
            ChatMessage::system("You are a fact checker."),
            ChatMessage::user_with_image(
                ImageRef::from_bytes(b"\x89PNG\r\n\x1a\npixels".to_vec()),
                "Is this real?",
            ),
        ],
    )
}

/// Authorization header and body of the last request.
type LastRequest = Option<(Option<String>, Value)>;

#[derive(Clone, Default)]
struct Seen {
    calls: Arc<AtomicUsize>,
    last: Arc<std::sync::Mutex<LastRequest>>,
}

async fn ok_handler(State(seen): State<Seen>, headers: HeaderMap, Json(body): Json<Value>) -> Json<Value> {
    seen.calls.fetch_add(1, Ordering::SeqCst);
    let auth = headers.get("authorization").map(|v| v.to_str().unwrap().to_string());
    *seen.last.lock().unwrap() = Some((auth, body));
    Json(json!({
        "choices": [{ "message": { "role": "assistant", "content": "Looks fine.\nIS THIS MISINFORMATION? NO" } }],
        "usage": { "prompt_tokens": 1200, "completion_tokens": 80 }
    }))
}

#[tokio::test]
async fn completion_round_trip() {
    let seen = Seen::default();
    let app = Router::new()
        .route("/v1/chat/completions", post(ok_handler))
        .with_state(seen.clone());
    let backend = OpenAiCompatBackend::new(config(&serve(app).await)).unwrap();
    let response = backend.complete(&request()).await.unwrap();
    assert!(response.text.ends_with("NO"));
    assert_eq!(response.usage.prompt_tokens, 1200);
    assert_eq!(response.usage.completion_tokens, 80);
    assert_eq!(response.usage.model_id, "gpt-4o");
    assert!(response.usage.latency_secs > 0.0);

    let (auth, body) = seen.last.lock().unwrap().clone().unwrap();
    assert_eq!(auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(body["model"], "gpt-4o");
    assert_eq!(body["temperature"].as_f64().unwrap() as f32, 0.2);
    assert_eq!(body["messages"][0]["content"], "You are a fact checker.");
    let parts = body["messages"][1]["content"].as_array().unwrap();
    assert!(
        parts[0]["image_url"]["url"]
            .as_str()
            .unwrap()
            .starts_with("data:image/png;base64,")
    );
    assert_eq!(parts[1]["text"], "Is this real?");
}

#[tokio::test]
async fn server_errors_are_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let app = Router::new().route(
        "/v1/chat/completions",
        post(move || {
            let n = c.fetch_add(1, Ordering::SeqCst);
            async move {
                if n == 0 {
                    (StatusCode::SERVICE_UNAVAILABLE, "busy".to_string())
                } else {
                    (
                        StatusCode::OK,
                        json!({ "choices": [{ "message": { "content": "ok" } }] }).to_string(),
                    )
                }
            }
        }),
    );
    let backend = OpenAiCompatBackend::new(config(&serve(app).await)).unwrap();
    assert_eq!(backend.complete(&request()).await.unwrap().text, "ok");
    assert_eq!(calls.load(Ordering::SeqCst), 2);
}

#[tokio::test]
async fn client_errors_surface_provider_message() {
    let calls = Arc::new(AtomicUsize::new(0));
    let c = calls.clone();
    let app = Router::new().route(
        "/v1/chat/completions",
        post(move || {
            c.fetch_add(1, Ordering::SeqCst);
            async {
                (
                    StatusCode::BAD_REQUEST,
                    json!({ "error": { "message": "model not found" } }).to_string(),
                )
            }
        }),
    );
    let backend = OpenAiCompatBackend::new(config(&serve(app).await)).unwrap();
    match backend.complete(&request()).await.unwrap_err() {
        BackendError::Provider {
            status,
            message,
            attempts,
        } => {
            assert_eq!((status, attempts), (400, 1));
            assert_eq!(message, "model not found");
        }
        other => panic!("{other}"),
    }
    assert_eq!(calls.load(Ordering::SeqCst), 1);
}

#[tokio::test]
async fn dropped_connections_give_retryable_error_after_three_attempts() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let accepted = Arc::new(AtomicUsize::new(0));
    let a = accepted.clone();
    tokio::spawn(async move {
        loop {
            let (sock, _) = listener.accept().await.unwrap();
            a.fetch_add(1, Ordering::SeqCst);
            drop(sock);
        }
    });
    let backend = OpenAiCompatBackend::new(config(&format!("http://{addr}/v1"))).unwrap();
    let err = backend.complete(&request()).await.unwrap_err();
    assert!(err.is_retryable());
    assert!(matches!(err, BackendError::Transport { attempts: 3, .. }), "{err}");
    assert!(accepted.load(Ordering::SeqCst) >= 3);
}

#[tokio::test]
async fn unreachable_endpoint_is_retryable() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let backend = OpenAiCompatBackend::new(config(&format!("http://{addr}"))).unwrap();
    let err = backend.complete(&request()).await.unwrap_err();
    assert!(matches!(err, BackendError::Transport { attempts: 3, .. }), "{err}");
}

#[tokio::test]
async fn malformed_body_is_not_retried() {
    let app = Router::new().route("/v1/chat/completions", post(|| async { "{\"choices\": " }));
    let backend = OpenAiCompatBackend::new(config(&serve(app).await)).unwrap();
    assert!(matches!(
        backend.complete(&request()).await.unwrap_err(),
        BackendError::MalformedResponse(_)
    ));
}

#[tokio::test]
async fn empty_request_never_reaches_the_wire() {
    let backend = OpenAiCompatBackend::new(config("http://127.0.0.1:9")).unwrap();
    let err = backend.complete(&ChatRequest::new("gpt-4o", vec![])).await.unwrap_err();
    assert_eq!(err.to_string(), "empty request");
}
