//! Local mock service speaking the same wire protocol as real backends.
//!
//! Routes (under `/v1`): `POST chat/completions`, `POST embeddings`,
//! `GET stats`, `POST stats/reset`. Malformed requests get a 400 with an
//! `{"error": {...}}` body.

use std::net::{SocketAddr, TcpListener};
use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::oneshot;

use super::mock::{HashedEmbedder, MockRules, DEFAULT_EMBED_DIM};
use crate::error::{Error, Result};
use crate::image::ImageTensor;

#[derive(Debug, Clone)]
pub struct MockServerOptions {
    pub rules: MockRules,
    pub embed_dim: usize,
    pub embed_seed: u64,
}

impl Default for MockServerOptions {
    fn default() -> Self {
        Self {
            rules: MockRules::default(),
            embed_dim: DEFAULT_EMBED_DIM,
            embed_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockStats {
    pub chat_requests: u64,
    pub embedding_requests: u64,
    pub rejected_requests: u64,
}

struct ServerState {
    rules: MockRules,
    embedder: HashedEmbedder,
    chat: AtomicU64,
    embeddings: AtomicU64,
    rejected: AtomicU64,
    fail_next: AtomicU32,
}

impl ServerState {
    fn stats(&self) -> MockStats {
        MockStats {
            chat_requests: self.chat.load(Ordering::SeqCst),
            embedding_requests: self.embeddings.load(Ordering::SeqCst),
            rejected_requests: self.rejected.load(Ordering::SeqCst),
        }
    }

    fn reset(&self) {
        self.chat.store(0, Ordering::SeqCst);
        self.embeddings.store(0, Ordering::SeqCst);
        self.rejected.store(0, Ordering::SeqCst);
    }
}

/// A running mock server. Dropping the handle shuts it down.
pub struct MockServer {
    addr: SocketAddr,
    state: Arc<ServerState>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `127.0.0.1:port` (`0` picks a free port) and serves on a background thread.
    pub fn start(port: u16, options: MockServerOptions) -> Result<Self> {
        Self::bind(SocketAddr::from(([127, 0, 0, 1], port)), options)
    }

    pub fn bind(addr: SocketAddr, options: MockServerOptions) -> Result<Self> {
        let listener =
            TcpListener::bind(addr).map_err(|e| Error::Config(format!("mock server cannot bind {addr}: {e}")))?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let state = Arc::new(ServerState {
            rules: options.rules,
            embedder: HashedEmbedder::new(options.embed_dim, options.embed_seed)?,
            chat: AtomicU64::new(0),
            embeddings: AtomicU64::new(0),
            rejected: AtomicU64::new(0),
            fail_next: AtomicU32::new(0),
        });
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(state.clone());
        let runtime = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(4)
            .enable_all()
            .build()?;
        let thread = std::thread::Builder::new()
            .name("vap-mock-server".into())
            .spawn(move || {
                runtime.block_on(async move {
                    let listener = match tokio::net::TcpListener::from_std(listener) {
                        Ok(l) => l,
                        Err(e) => {
                            tracing::error!("mock server listener failed: {e}");
                            return;
                        }
                    };
                    let serve = axum::serve(listener, app).with_graceful_shutdown(async {
                        let _ = rx.await;
                    });
                    if let Err(e) = serve.await {
                        tracing::error!("mock server stopped: {e}");
                    }
                });
            })?;
        Ok(Self {
            addr,
            state,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL to put in a backend descriptor, e.g. `http://127.0.0.1:4567/v1`.
    pub fn base_url(&self) -> String {
        format!("http://{}/v1", self.addr)
    }

    pub fn stats(&self) -> MockStats {
        self.state.stats()
    }

    pub fn reset_stats(&self) {
        self.state.reset();
    }

    /// Answers the next `n` chat requests with 503.
    pub fn fail_next(&self, n: u32) {
        self.state.fail_next.store(n, Ordering::SeqCst);
    }

    /// Blocks until the server thread exits.
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn router(state: Arc<ServerState>) -> Router {
    Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/v1/embeddings", post(embeddings))
        .route("/v1/stats", get(stats))
        .route("/v1/stats/reset", post(reset))
        .with_state(state)
}

fn bad_request(state: &ServerState, message: impl Into<String>) -> Response {
    state.rejected.fetch_add(1, Ordering::SeqCst);
    let body = json!({
        "error": { "message": message.into(), "type": "invalid_request_error" }
    });
    (StatusCode::BAD_REQUEST, Json(body)).into_response()
}

#[derive(Deserialize)]
struct ChatRequest {
    model: String,
    messages: Vec<ChatMessage>,
}

#[derive(Deserialize)]
struct ChatMessage {
    role: String,
    content: Value,
}

/// Extracts the prompt text and decoded image from the last user message.
fn extract_chat(req: &ChatRequest) -> std::result::Result<(String, ImageTensor), String> {
    let msg = req
        .messages
        .iter()
        .rev()
        .find(|m| m.role == "user")
        .ok_or("no user message")?;
    let parts = match &msg.content {
        Value::Array(parts) => parts.clone(),
        Value::String(s) => vec![json!({ "type": "text", "text": s })],
        _ => return Err("content must be a string or an array of parts".into()),
    };
    let mut text = String::new();
    let mut image = None;
    for part in &parts {
        match part.get("type").and_then(Value::as_str) {
            Some("text") => text.push_str(part.get("text").and_then(Value::as_str).unwrap_or("")),
            Some("image_url") => {
                let url = part
                    .pointer("/image_url/url")
                    .and_then(Value::as_str)
                    .ok_or("image_url part without url")?;
                let b64 = url
                    .split_once("base64,")
                    .map(|(_, data)| data)
                    .ok_or("image url must be a base64 data url")?;
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(b64)
                    .map_err(|e| format!("bad base64: {e}"))?;
                image = Some(ImageTensor::from_png_bytes(&bytes).map_err(|e| e.to_string())?);
            }
            other => return Err(format!("unsupported content part type {other:?}")),
        }
    }
    let image = image.ok_or("request carries no image")?;
    Ok((text, image))
}

async fn chat(State(state): State<Arc<ServerState>>, body: Bytes) -> Response {
    let req: ChatRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return bad_request(&state, format!("malformed chat request: {e}")),
    };
    let (text, image) = match extract_chat(&req) {
        Ok(pair) => pair,
        Err(e) => return bad_request(&state, e),
    };
    let n = state.chat.fetch_add(1, Ordering::SeqCst);
    let pending = state.fail_next.load(Ordering::SeqCst);
    if pending > 0
        && state
            .fail_next
            .compare_exchange(pending, pending - 1, Ordering::SeqCst, Ordering::SeqCst)
            .is_ok()
    {
        let body = json!({ "error": { "message": "injected failure", "type": "server_error" } });
        return (StatusCode::SERVICE_UNAVAILABLE, Json(body)).into_response();
    }
    let prompt = (!text.trim().is_empty()).then_some(text.as_str());
    let content = state.rules.reply(&image.to_rgb8(), prompt);
    Json(json!({
        "id": format!("mock-{n}"),
        "object": "chat.completion",
        "model": req.model,
        "choices": [{
            "index": 0,
            "message": { "role": "assistant", "content": content },
            "finish_reason": "stop"
        }]
    }))
    .into_response()
}

#[derive(Deserialize)]
struct EmbeddingRequest {
    model: String,
    input: Value,
}

async fn embeddings(State(state): State<Arc<ServerState>>, body: Bytes) -> Response {
    let req: EmbeddingRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return bad_request(&state, format!("malformed embeddings request: {e}")),
    };
    let inputs: Vec<String> = match &req.input {
        Value::String(s) => vec![s.clone()],
        Value::Array(items) if items.iter().all(Value::is_string) => {
            items.iter().filter_map(|v| v.as_str().map(str::to_string)).collect()
        }
        _ => return bad_request(&state, "input must be a string or an array of strings"),
    };
    state.embeddings.fetch_add(1, Ordering::SeqCst);
    let data: Vec<Value> = inputs
        .iter()
        .enumerate()
        .map(|(i, text)| json!({ "object": "embedding", "index": i, "embedding": state.embedder.raw_vector(text) }))
        .collect();
    Json(json!({ "object": "list", "model": req.model, "data": data })).into_response()
}

async fn stats(State(state): State<Arc<ServerState>>) -> Json<MockStats> {
    Json(state.stats())
}

async fn reset(State(state): State<Arc<ServerState>>) -> StatusCode {
    state.reset();
    StatusCode::NO_CONTENT
}
