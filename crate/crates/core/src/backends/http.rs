//! Blocking HTTP clients for chat-completions and embeddings endpoints.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use base64::Engine;
use serde_json::{json, Value};
use ureq::Agent;

use super::audit::AuditEntry;
use super::{AuditLog, BackendDescriptor, Embedding, Gate, ModelResponse, TextEmbedder, VisionModel};
use crate::error::BackendError;
use crate::image::ImageTensor;

const MAX_BACKOFF: Duration = Duration::from_secs(10);

/// Shared transport: agent, concurrency gate, retry policy and audit sink.
struct Transport {
    desc: BackendDescriptor,
    label: String,
    agent: Agent,
    gate: Gate,
    audit: Option<AuditLog>,
    seq: AtomicU64,
}

impl Transport {
    fn new(desc: BackendDescriptor, audit: Option<AuditLog>) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(desc.timeout()))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            label: desc.label(),
            gate: Gate::new(desc.max_concurrency),
            agent,
            audit,
            seq: AtomicU64::new(0),
            desc,
        }
    }

    fn url(&self, endpoint: &str) -> String {
        format!("{}/{}", self.desc.base_url.trim_end_matches('/'), endpoint)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64 << (attempt.saturating_sub(1)).min(16);
        Duration::from_millis(self.desc.backoff_ms.saturating_mul(factor)).min(MAX_BACKOFF)
    }

    /// POSTs `body`, retrying transport failures, 429 and 5xx with exponential backoff.
    fn post(&self, endpoint: &str, body: &Value) -> Result<(Value, Duration), BackendError> {
        let _permit = self.gate.acquire();
        let request_id = format!("{}-{}", self.desc.model_id, self.seq.fetch_add(1, Ordering::Relaxed));
        let url = self.url(endpoint);
        let api_key = self.desc.resolved_api_key();
        let attempts = self.desc.max_retries.saturating_add(1);
        let mut last_err = BackendError::Transport {
            attempts: 0,
            message: "no attempt made".into(),
        };
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(self.backoff(attempt - 1));
            }
            let start = Instant::now();
            let mut req = self
                .agent
                .post(&url)
                .header("Content-Type", "application/json")
                .header("X-Request-Id", &request_id);
            if let Some(key) = &api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            let outcome = req.send_json(body).and_then(|mut resp| {
                let status = resp.status().as_u16();
                resp.body_mut().read_to_string().map(|text| (status, text))
            });
            let latency = start.elapsed();
            let (status, text) = match outcome {
                Ok(pair) => pair,
                Err(e) => {
                    let message = e.to_string();
                    self.audit(
                        &request_id,
                        endpoint,
                        attempt,
                        body,
                        None,
                        None,
                        Some(&message),
                        latency,
                    );
                    tracing::debug!(backend = %self.label, attempt, error = %message, "transport failure");
                    last_err = BackendError::Transport {
                        attempts: attempt,
                        message,
                    };
                    continue;
                }
            };
            self.audit(
                &request_id,
                endpoint,
                attempt,
                body,
                Some(status),
                Some(&text),
                None,
                latency,
            );
            if (200..300).contains(&status) {
                let value: Value = serde_json::from_str(&text)
                    .map_err(|e| BackendError::Decode(format!("invalid json from {url}: {e}")))?;
                return Ok((value, latency));
            }
            last_err = BackendError::Protocol { status, body: text };
            if !(status == 429 || status >= 500) {
                break;
            }
        }
        Err(last_err)
    }

    #[allow(clippy::too_many_arguments)]
    fn audit(
        &self,
        request_id: &str,
        endpoint: &str,
        attempt: u32,
        request: &Value,
        status: Option<u16>,
        response: Option<&str>,
        error: Option<&str>,
        latency: Duration,
    ) {
        if let Some(audit) = &self.audit {
            audit.write(&AuditEntry {
                request_id,
                backend: &self.label,
                endpoint,
                attempt,
                request,
                status,
                response,
                error,
                latency_ms: latency.as_secs_f64() * 1000.0,
            });
        }
    }
}

/// Builds the chat-completions body: one user message with a text part and a PNG data URL.
pub fn chat_request(
    desc: &BackendDescriptor,
    image: &ImageTensor,
    prompt: Option<&str>,
) -> Result<Value, BackendError> {
    let png = image
        .to_png_bytes()
        .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
    let data_url = format!(
        "data:image/png;base64,{}",
        base64::engine::general_purpose::STANDARD.encode(png)
    );
    let text = prompt.unwrap_or(&desc.null_prompt);
    Ok(json!({
        "model": desc.model_id,
        "temperature": desc.temperature,
        "max_tokens": desc.max_tokens,
        "messages": [{
            "role": "user",
            "content": [
                { "type": "text", "text": text },
                { "type": "image_url", "image_url": { "url": data_url } }
            ]
        }]
    }))
}

/// Extracts `choices[0].message.content`; content may be a string or a list of text parts.
pub fn parse_chat_response(value: &Value) -> Result<String, BackendError> {
    let content = value
        .pointer("/choices/0/message/content")
        .ok_or_else(|| BackendError::Decode("missing choices[0].message.content".into()))?;
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Null => Ok(String::new()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p.get("text").and_then(Value::as_str))
            .collect::<Vec<_>>()
            .join("")),
        other => Err(BackendError::Decode(format!("unexpected content type: {other}"))),
    }
}

pub fn parse_embedding_response(value: &Value) -> Result<Vec<f64>, BackendError> {
    let arr = value
        .pointer("/data/0/embedding")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Decode("missing data[0].embedding".into()))?;
    arr.iter()
        .map(|v| {
            v.as_f64()
                .ok_or_else(|| BackendError::Decode(format!("non-numeric embedding element {v}")))
        })
        .collect()
}

pub struct HttpVisionModel {
    transport: Transport,
}

impl HttpVisionModel {
    pub fn new(desc: BackendDescriptor, audit: Option<AuditLog>) -> Self {
        Self {
            transport: Transport::new(desc, audit),
        }
    }
}

impl VisionModel for HttpVisionModel {
    fn id(&self) -> &str {
        &self.transport.label
    }

    fn respond(&self, image: &ImageTensor, prompt: Option<&str>) -> Result<ModelResponse, BackendError> {
        let body = chat_request(&self.transport.desc, image, prompt)?;
        let (raw, latency) = self.transport.post("chat/completions", &body)?;
        let text = parse_chat_response(&raw)?;
        Ok(ModelResponse { text, latency, raw })
    }

    fn max_concurrency(&self) -> usize {
        self.transport.gate.capacity()
    }
}

pub struct HttpEmbedder {
    transport: Transport,
}

impl HttpEmbedder {
    pub fn new(desc: BackendDescriptor, audit: Option<AuditLog>) -> Self {
        Self {
            transport: Transport::new(desc, audit),
        }
    }
}

impl TextEmbedder for HttpEmbedder {
    fn id(&self) -> &str {
        &self.transport.label
    }

    fn embed(&self, text: &str) -> Result<Embedding, BackendError> {
        let body = json!({ "model": self.transport.desc.model_id, "input": text });
        let (raw, _) = self.transport.post("embeddings", &body)?;
        Embedding::normalized(parse_embedding_response(&raw)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chat_request_shape() {
        let desc = BackendDescriptor::new("http://x/v1", "llava");
        let img = ImageTensor::filled(2, 2, 0.5).unwrap();
        let body = chat_request(&desc, &img, None).unwrap();
        assert_eq!(body["model"], "llava");
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["content"][0]["text"], "");
        let url = body["messages"][0]["content"][1]["image_url"]["url"].as_str().unwrap();
        assert!(url.starts_with("data:image/png;base64,"));
        let body = chat_request(&desc, &img, Some("hi")).unwrap();
        assert_eq!(body["messages"][0]["content"][0]["text"], "hi");
    }

    #[test]
    fn response_parsing() {
        let v = json!({"choices": [{"message": {"content": "Yes"}}]});
        assert_eq!(parse_chat_response(&v).unwrap(), "Yes");
        let v = json!({"choices": [{"message": {"content": [{"type": "text", "text": "a"}, {"type": "text", "text": "b"}]}}]});
        assert_eq!(parse_chat_response(&v).unwrap(), "ab");
        assert!(parse_chat_response(&json!({"choices": []})).is_err());
        let v = json!({"data": [{"embedding": [1.0, 2.0]}]});
        assert_eq!(parse_embedding_response(&v).unwrap(), vec![1.0, 2.0]);
        assert!(parse_embedding_response(&json!({"data": [{"embedding": ["x"]}]})).is_err());
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let mut desc = BackendDescriptor::new("http://x/v1", "m");
        desc.backoff_ms = 100;
        let t = Transport::new(desc, None);
        assert_eq!(t.backoff(1), Duration::from_millis(100));
        assert_eq!(t.backoff(2), Duration::from_millis(200));
        assert_eq!(t.backoff(3), Duration::from_millis(400));
        assert_eq!(t.backoff(30), MAX_BACKOFF);
    }
}
