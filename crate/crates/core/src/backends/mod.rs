//! Clients for the two black-box services: the vision-language model and the
//! text embedder. Both speak the chat-completions / embeddings JSON shapes.
//!
//! A `mock://` base URL selects the in-process deterministic mocks, which
//! implement the same rules as the HTTP mock server in [`server`].

mod audit;
mod gate;
pub mod http;
pub mod mock;
pub mod server;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use audit::AuditLog;
pub use gate::Gate;

use crate::error::{BackendError, Error, Result};
use crate::image::ImageTensor;

/// Environment variable that overrides any configured API key.
pub const API_KEY_ENV: &str = "VAP_API_KEY";

pub const MOCK_SCHEME: &str = "mock://";

fn default_timeout_ms() -> u64 {
    60_000
}
fn default_retries() -> u32 {
    3
}
fn default_concurrency() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_max_tokens() -> u32 {
    256
}

/// Where and how to reach a model or embedding service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendDescriptor {
    pub base_url: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key: Option<String>,
    pub model_id: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Text sent alongside the image for the null-prompt condition.
    #[serde(default)]
    pub null_prompt: String,
}

impl BackendDescriptor {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            model_id: model_id.into(),
            timeout_ms: default_timeout_ms(),
            max_retries: default_retries(),
            max_concurrency: default_concurrency(),
            backoff_ms: default_backoff_ms(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            null_prompt: String::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::Config(format!(
                "backend `{}`: timeout must be > 0",
                self.model_id
            )));
        }
        if self.max_concurrency == 0 {
            return Err(Error::Config(format!(
                "backend `{}`: max_concurrency must be >= 1",
                self.model_id
            )));
        }
        let url = self.base_url.as_str();
        let host = url
            .strip_prefix("http://")
            .or_else(|| url.strip_prefix("https://"))
            .map(|rest| rest.split(['/', '?']).next().unwrap_or(""));
        if host.is_some_and(|h| h.is_empty() || h.starts_with(':') || h.contains(char::is_whitespace)) {
            return Err(Error::Config(format!(
                "backend `{}`: base_url `{url}` has no valid host",
                self.model_id
            )));
        }
        if !(url.starts_with(MOCK_SCHEME) || host.is_some()) {
            return Err(Error::Config(format!(
                "backend `{}`: unsupported base_url `{url}` (expected http://, https:// or mock://)",
                self.model_id
            )));
        }
        Ok(())
    }

    pub fn is_mock(&self) -> bool {
        self.base_url.starts_with(MOCK_SCHEME)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    /// `VAP_API_KEY` wins over the configured key.
    pub fn resolved_api_key(&self) -> Option<String> {
        std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty())
            .or_else(|| self.api_key.clone())
    }

    /// Stable identity used in run records: model id plus endpoint.
    pub fn label(&self) -> String {
        format!("{}@{}", self.model_id, self.base_url)
    }
}

/// A decoded model reply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    #[serde(with = "duration_ms")]
    pub latency: Duration,
    /// Raw response payload, kept for audit.
    pub raw: serde_json::Value,
}

/// A unit-length text embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    vector: Vec<f64>,
}

impl Embedding {
    /// L2-normalizes `raw`. Zero or non-finite vectors are rejected.
    pub fn normalized(raw: Vec<f64>) -> Result<Self, BackendError> {
        if raw.is_empty() {
            return Err(BackendError::Decode("empty embedding".into()));
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(BackendError::Decode("embedding contains non-finite values".into()));
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(BackendError::Decode("zero-norm embedding".into()));
        }
        Ok(Self {
            vector: raw.into_iter().map(|v| v / norm).collect(),
        })
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Dot product of two unit embeddings, clamped into `[-1, 1]`.
pub fn similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::validation(format!(
            "embedding dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    let dot: f64 = a.vector.iter().zip(&b.vector).map(|(x, y)| x * y).sum();
    Ok(dot.clamp(-1.0, 1.0))
}

/// The queried vision-language model `w = f(x, c)`.
pub trait VisionModel: Send + Sync {
    fn id(&self) -> &str;

    /// `prompt = None` is the null-text condition.
    fn respond(&self, image: &ImageTensor, prompt: Option<&str>) -> Result<ModelResponse, BackendError>;

    /// Upper bound on in-flight requests this backend accepts.
    fn max_concurrency(&self) -> usize {
        1
    }
}

/// The text encoder used to compare responses.
pub trait TextEmbedder: Send + Sync {
    fn id(&self) -> &str;

    fn embed(&self, text: &str) -> Result<Embedding, BackendError>;
}

pub fn connect_model(desc: &BackendDescriptor, audit: Option<AuditLog>) -> Result<Arc<dyn VisionModel>> {
    desc.validate()?;
    if desc.is_mock() {
        let rules = mock::MockRules::from_url(&desc.base_url)?;
        return Ok(Arc::new(mock::MockVisionModel::new(desc.label(), rules)));
    }
    Ok(Arc::new(http::HttpVisionModel::new(desc.clone(), audit)))
}

pub fn connect_embedder(desc: &BackendDescriptor, audit: Option<AuditLog>) -> Result<Arc<dyn TextEmbedder>> {
    desc.validate()?;
    if desc.is_mock() {
        let params = mock::MockParams::parse(&desc.base_url)?;
        let embedder = mock::HashedEmbedder::new(
            params.get_usize("dim")?.unwrap_or(mock::DEFAULT_EMBED_DIM),
            params.get_u64("seed")?.unwrap_or(0),
        )?;
        return Ok(Arc::new(embedder.with_id(desc.label())));
    }
    Ok(Arc::new(http::HttpEmbedder::new(desc.clone(), audit)))
}

pub(crate) mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64() * 1000.0)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        Ok(Duration::from_secs_f64(ms.max(0.0) / 1000.0))
    }
}
