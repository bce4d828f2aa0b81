//! Provider-agnostic chat-completion client.
//!
//! One wire dialect (the OpenAI-compatible chat body) covers every model the
//! pipeline targets; Qwen is reached through its compatible endpoint. The
//! client layers retry with exponential backoff, an in-flight bound, optional
//! request pacing, and a persistent response cache over any [`Provider`].
//! Deterministic offline runs swap the HTTP provider for a replay store.

mod cache;
mod limiter;
mod provider;

pub use cache::{load_store, parse_store, Cache, CacheEntry};
pub use limiter::{Semaphore, TokenBucket};
pub use provider::{
    HttpProvider, Provider, ProviderReply, RecordProvider, ReplayProvider, SendError,
};

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Connection and sampling settings for one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout_secs: u64,
}

/// Built-in endpoint settings for the supported model names.
pub mod registry {
    use super::ProviderConfig;

    const OPENAI_URL: &str = "https://api.openai.com/v1/chat/completions";
    const DASHSCOPE_URL: &str = "https://dashscope.aliyuncs.com/compatible-mode/v1/chat/completions";

    /// Model names with built-in endpoint settings.
    pub fn known_models() -> &'static [&'static str] {
        &["gpt-4", "gpt-4-turbo", "qwen-turbo"]
    }

    /// Look up a model by name, case-insensitively. Defaults: temperature 0
    /// for extraction determinism, 2048 output tokens, 120s timeout.
    pub fn provider_for_model(name: &str) -> Option<ProviderConfig> {
        let canonical = name.to_lowercase();
        let (endpoint_url, api_key_env) = match canonical.as_str() {
            "gpt-4" | "gpt-4-turbo" => (OPENAI_URL, "OPENAI_API_KEY"),
            "qwen-turbo" => (DASHSCOPE_URL, "DASHSCOPE_API_KEY"),
            _ => return None,
        };
        Some(ProviderConfig {
            endpoint_url: endpoint_url.to_string(),
            model_name: canonical,
            api_key_env: api_key_env.to_string(),
            temperature: 0.0,
            max_output_tokens: 2048,
            timeout_secs: 120,
        })
    }
}

/// Stable identity of a completion request: a hash over everything that can
/// change the answer. Fields are length-prefixed so adjacent fields cannot
/// blur together, and temperature hashes by bit pattern.
pub fn request_key(model_name: &str, temperature: f64, system_text: &str, user_text: &str) -> String {
    let mut hasher = Sha256::new();
    for part in [
        model_name.as_bytes(),
        &temperature.to_bits().to_be_bytes()[..],
        system_text.as_bytes(),
        user_text.as_bytes(),
    ] {
        hasher.update((part.len() as u64).to_be_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(digest.len() * 2);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// One completion request, keyed for caching and replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmRequest {
    pub system_text: String,
    pub user_text: String,
    pub model_name: String,
    pub temperature: f64,
    pub request_key: String,
}

impl LlmRequest {
    pub fn new(provider: &ProviderConfig, system_text: &str, user_text: &str) -> Self {
        let request_key = request_key(
            &provider.model_name,
            provider.temperature,
            system_text,
            user_text,
        );
        LlmRequest {
            system_text: system_text.to_string(),
            user_text: user_text.to_string(),
            model_name: provider.model_name.clone(),
            temperature: provider.temperature,
            request_key,
        }
    }
}

/// A completed request as seen by callers.
#[derive(Debug, Clone)]
pub struct LlmResponse {
    pub text: String,
    pub finish_reason: String,
    pub latency_ms: u64,
    /// Raw provider payload (null for cache hits and replay).
    pub provider_echo: serde_json::Value,
    pub cached: bool,
}

/// When and how often to retry failed sends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub backoff_multiplier: f64,
    pub retryable_statuses: Vec<u16>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff_ms: 200,
            backoff_multiplier: 2.0,
            retryable_statuses: vec![408, 429, 500, 502, 503, 504],
        }
    }
}

/// Client-side knobs independent of the provider.
#[derive(Debug, Clone)]
pub struct ClientConfig {
    /// Maximum requests outstanding at any instant.
    pub in_flight_limit: usize,
    /// Optional pacing; `None` disables the token bucket.
    pub requests_per_minute: Option<f64>,
    pub retry: RetryPolicy,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            in_flight_limit: 4,
            requests_per_minute: None,
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("transport failure after {attempts} attempt(s): {detail}")]
    Transport {
        status: Option<u16>,
        detail: String,
        attempts: u32,
    },
    #[error("replay store has no entry for request_key {request_key}")]
    ReplayMiss { request_key: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("response store line {line}: {detail}")]
    Store { line: usize, detail: String },
}

/// Shareable completion client. Clone-free sharing: wrap in `Arc` or hand out
/// `&LlmClient` across scoped threads.
pub struct LlmClient {
    provider: Box<dyn Provider>,
    cache: Option<Mutex<Cache>>,
    retry: RetryPolicy,
    gate: Semaphore,
    pacer: Option<TokenBucket>,
}

impl LlmClient {
    pub fn new(provider: Box<dyn Provider>, cache: Option<Cache>, config: ClientConfig) -> Self {
        LlmClient {
            provider,
            cache: cache.map(Mutex::new),
            retry: config.retry,
            gate: Semaphore::new(config.in_flight_limit.max(1)),
            pacer: config.requests_per_minute.map(TokenBucket::per_minute),
        }
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    /// Complete one request: cache lookup first, then paced, bounded sends
    /// with retry. A success is cached before it is returned.
    pub fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        if let Some(cache) = &self.cache {
            if let Some(text) = cache.lock().unwrap().get(&request.request_key) {
                return Ok(LlmResponse {
                    text: text.to_string(),
                    finish_reason: "cached".to_string(),
                    latency_ms: 0,
                    provider_echo: serde_json::Value::Null,
                    cached: true,
                });
            }
        }

        let _permit = self.gate.acquire();
        let mut backoff_ms = self.retry.initial_backoff_ms as f64;
        let mut attempt = 1u32;
        loop {
            if let Some(pacer) = &self.pacer {
                pacer.take();
            }
            let started = Instant::now();
            match self.provider.send(request) {
                Ok(reply) => {
                    let response = LlmResponse {
                        text: reply.text,
                        finish_reason: reply.finish_reason,
                        latency_ms: started.elapsed().as_millis() as u64,
                        provider_echo: reply.echo,
                        cached: false,
                    };
                    if let Some(cache) = &self.cache {
                        cache
                            .lock()
                            .unwrap()
                            .put(&request.request_key, &response.text)?;
                    }
                    return Ok(response);
                }
                Err(SendError::ReplayMiss { request_key }) => {
                    return Err(LlmError::ReplayMiss { request_key });
                }
                Err(e) => {
                    let retryable = match &e {
                        SendError::Network(_) => true,
                        SendError::Http { status, .. } => {
                            self.retry.retryable_statuses.contains(status)
                        }
                        _ => false,
                    };
                    if !retryable || attempt >= self.retry.max_attempts {
                        return Err(LlmError::Transport {
                            status: e.status(),
                            detail: e.to_string(),
                            attempts: attempt,
                        });
                    }
                    std::thread::sleep(Duration::from_millis(backoff_ms as u64));
                    backoff_ms *= self.retry.backoff_multiplier;
                    attempt += 1;
                }
            }
        }
    }
}
