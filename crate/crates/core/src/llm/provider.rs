//! Completion providers: live HTTP, deterministic replay, and a recording
//! wrapper that captures live traffic for later replay.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde_json::json;

use super::cache::{load_store, CacheEntry};
use super::{LlmError, LlmRequest, ProviderConfig};

/// One provider reply before client bookkeeping (latency, cached flag).
#[derive(Debug, Clone)]
pub struct ProviderReply {
    pub text: String,
    pub finish_reason: String,
    /// Raw provider payload, retained for audit.
    pub echo: serde_json::Value,
}

/// Why a single send attempt failed. The retry policy decides which of these
/// are worth another attempt.
#[derive(Debug, thiserror::Error)]
pub enum SendError {
    #[error("HTTP status {status}: {detail}")]
    Http { status: u16, detail: String },
    #[error("network: {0}")]
    Network(String),
    #[error("replay store has no entry for request_key {request_key}")]
    ReplayMiss { request_key: String },
    #[error("malformed provider response: {0}")]
    BadResponse(String),
}

impl SendError {
    pub fn status(&self) -> Option<u16> {
        match self {
            SendError::Http { status, .. } => Some(*status),
            _ => None,
        }
    }
}

/// A chat-completion backend. Implementations must be shareable across the
/// client's worker threads.
pub trait Provider: Send + Sync {
    fn send(&self, request: &LlmRequest) -> Result<ProviderReply, SendError>;
    /// Short name for logs and run manifests.
    fn name(&self) -> &str;
}

// ==== live HTTP ====

/// Live provider speaking the OpenAI-compatible chat-completion dialect.
pub struct HttpProvider {
    config: ProviderConfig,
    api_key: String,
    http: reqwest::blocking::Client,
}

impl HttpProvider {
    /// Build a live provider. Fails fast when the API key variable is unset,
    /// before any network traffic.
    pub fn new(config: ProviderConfig) -> Result<Self, LlmError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            LlmError::Config(format!(
                "environment variable {} is not set (required for model {})",
                config.api_key_env, config.model_name
            ))
        })?;
        let http = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Config(format!("HTTP client: {e}")))?;
        Ok(HttpProvider {
            config,
            api_key,
            http,
        })
    }
}

impl Provider for HttpProvider {
    fn send(&self, request: &LlmRequest) -> Result<ProviderReply, SendError> {
        let body = json!({
            "model": self.config.model_name,
            "messages": [
                {"role": "system", "content": request.system_text},
                {"role": "user", "content": request.user_text},
            ],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
        });
        let response = self
            .http
            .post(&self.config.endpoint_url)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| SendError::Network(e.to_string()))?;

        let status = response.status().as_u16();
        let payload: serde_json::Value = match response.json() {
            Ok(v) => v,
            Err(e) if status < 400 => return Err(SendError::BadResponse(e.to_string())),
            Err(e) => {
                return Err(SendError::Http {
                    status,
                    detail: format!("unreadable error body: {e}"),
                })
            }
        };
        if status >= 400 {
            return Err(SendError::Http {
                status,
                detail: payload["error"]["message"]
                    .as_str()
                    .unwrap_or("no error message")
                    .to_string(),
            });
        }

        let choice = &payload["choices"][0];
        let text = choice["message"]["content"]
            .as_str()
            .ok_or_else(|| SendError::BadResponse("missing choices[0].message.content".into()))?
            .to_string();
        let finish_reason = choice["finish_reason"].as_str().unwrap_or("unknown").to_string();
        Ok(ProviderReply {
            text,
            finish_reason,
            echo: payload,
        })
    }

    fn name(&self) -> &str {
        "http"
    }
}

// ==== replay ====

/// Offline provider serving scripted responses keyed by request_key.
pub struct ReplayProvider {
    store: BTreeMap<String, String>,
}

impl ReplayProvider {
    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        Ok(ReplayProvider {
            store: load_store(path)?,
        })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (String, String)>) -> Self {
        ReplayProvider {
            store: entries.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.store.len()
    }

    pub fn is_empty(&self) -> bool {
        self.store.is_empty()
    }
}

impl Provider for ReplayProvider {
    fn send(&self, request: &LlmRequest) -> Result<ProviderReply, SendError> {
        match self.store.get(&request.request_key) {
            Some(text) => Ok(ProviderReply {
                text: text.clone(),
                finish_reason: "replay".to_string(),
                echo: serde_json::Value::Null,
            }),
            None => Err(SendError::ReplayMiss {
                request_key: request.request_key.clone(),
            }),
        }
    }

    fn name(&self) -> &str {
        "replay"
    }
}

// ==== record ====

/// Wrapper that forwards to a live provider and appends every successful
/// (request_key, text) pair to a replay store.
pub struct RecordProvider {
    inner: Box<dyn Provider>,
    path: PathBuf,
    sink: Mutex<std::fs::File>,
}

impl RecordProvider {
    pub fn new(inner: Box<dyn Provider>, path: &Path) -> Result<Self, LlmError> {
        let sink = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| LlmError::Io {
                path: path.display().to_string(),
                source,
            })?;
        Ok(RecordProvider {
            inner,
            path: path.to_path_buf(),
            sink: Mutex::new(sink),
        })
    }
}

impl Provider for RecordProvider {
    fn send(&self, request: &LlmRequest) -> Result<ProviderReply, SendError> {
        let reply = self.inner.send(request)?;
        let entry = CacheEntry {
            request_key: request.request_key.clone(),
            text: reply.text.clone(),
        };
        let mut line = serde_json::to_string(&entry).expect("entry serializes");
        line.push('\n');
        let mut sink = self.sink.lock().unwrap();
        if let Err(e) = sink.write_all(line.as_bytes()).and_then(|()| sink.flush()) {
            // recording is best-effort; the completion itself succeeded
            log::warn!("record store {}: {e}", self.path.display());
        }
        Ok(reply)
    }

    fn name(&self) -> &str {
        "record"
    }
}

#[cfg(test)]
mod tests {
    use super::super::registry;
    use super::*;

    fn request(user: &str) -> LlmRequest {
        let config = registry::provider_for_model("gpt-4").unwrap();
        LlmRequest::new(&config, "system", user)
    }

    #[test]
    fn replay_serves_scripted_text_and_misses_name_the_key() {
        let req = request("hello");
        let provider =
            ReplayProvider::from_entries([(req.request_key.clone(), "scripted".to_string())]);
        assert_eq!(provider.send(&req).unwrap().text, "scripted");

        let other = request("different");
        match provider.send(&other).unwrap_err() {
            SendError::ReplayMiss { request_key } => assert_eq!(request_key, other.request_key),
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn record_then_replay_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let req = request("capture me");
        {
            let inner = ReplayProvider::from_entries([(
                req.request_key.clone(),
                "live answer".to_string(),
            )]);
            let recorder = RecordProvider::new(Box::new(inner), &path).unwrap();
            assert_eq!(recorder.send(&req).unwrap().text, "live answer");
        }
        let replay = ReplayProvider::from_file(&path).unwrap();
        assert_eq!(replay.len(), 1);
        assert_eq!(replay.send(&req).unwrap().text, "live answer");
    }

    #[test]
    fn missing_api_key_is_a_config_error() {
        let mut config = registry::provider_for_model("gpt-4").unwrap();
        config.api_key_env = "DDEE_TEST_KEY_THAT_DOES_NOT_EXIST".to_string();
        match HttpProvider::new(config) {
            Err(LlmError::Config(msg)) => {
                assert!(msg.contains("DDEE_TEST_KEY_THAT_DOES_NOT_EXIST"))
            }
            Err(e) => panic!("unexpected error {e:?}"),
            Ok(_) => panic!("expected a config error"),
        }
    }
}
