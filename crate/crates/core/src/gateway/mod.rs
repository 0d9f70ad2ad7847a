//! Sending prompt scripts to a vision-language model.
//!
//! The [`Gateway`] wraps a [`ChatBackend`] with a concurrency cap, bounded
//! retries with exponential backoff, a payload-size check and an optional
//! transcript log. Every exchange is logged before its answer is parsed, so
//! failures can be replayed.

pub mod backend;
pub mod parse;
pub mod transcript;

use std::path::Path;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::prompt::{PromptScript, ScriptTag};

pub use backend::{
    response_text, wire_request, BackendError, ChatBackend, FnBackend, HttpBackend, RequestParams,
    ScriptedBackend, TranscriptBackend,
};
pub use parse::{parse_choice, parse_correctness, parse_presence, ParsedChoice};
pub use transcript::{TranscriptLog, TranscriptRecord, TranscriptTurn};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("{record_id}: gave up after {attempts} attempt(s): {message}")]
    Transport {
        record_id: String,
        attempts: u32,
        message: String,
    },
    #[error("{record_id}: payload of {bytes} bytes exceeds the {limit} byte limit")]
    Capacity {
        record_id: String,
        bytes: usize,
        limit: usize,
    },
    #[error("transcript: {0}")]
    Transcript(#[from] std::io::Error),
    #[error("endpoint configuration: {0}")]
    Config(String),
}

/// Endpoint settings, usually the `[endpoint]` table of the run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EndpointConfig {
    pub url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub max_in_flight: usize,
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub timeout_secs: u64,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Upper bound on base64-encoded image bytes per request.
    pub max_payload_bytes: usize,
}

impl Default for EndpointConfig {
    fn default() -> Self {
        EndpointConfig {
            url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "default".into(),
            token_env: None,
            max_in_flight: 4,
            max_attempts: 3,
            base_backoff_ms: 500,
            max_backoff_ms: 8_000,
            timeout_secs: 120,
            temperature: 0.0,
            max_tokens: 1024,
            max_payload_bytes: 20 * 1024 * 1024,
        }
    }
}

impl EndpointConfig {
    pub fn params(&self) -> RequestParams {
        RequestParams {
            model: self.model.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }

    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64
            .checked_shl(retry.saturating_sub(1))
            .unwrap_or(u64::MAX);
        Duration::from_millis(
            self.base_backoff_ms
                .saturating_mul(factor)
                .min(self.max_backoff_ms),
        )
    }

    /// HTTP backend for this endpoint; reads the token from `token_env`.
    pub fn http_backend(&self) -> Result<HttpBackend, GatewayError> {
        let token = match &self.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Config(format!("environment variable {var} is not set"))
            })?),
            None => None,
        };
        HttpBackend::new(&self.url, token, Duration::from_secs(self.timeout_secs))
            .map_err(|e| GatewayError::Config(e.to_string()))
    }
}

/// Counting semaphore for in-flight requests.
struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(n: usize) -> Self {
        Limiter {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|p| p.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// A completed request/response pair.
#[derive(Debug, Clone)]
pub struct LvlmExchange {
    pub record_id: String,
    pub tag: Option<ScriptTag>,
    pub script: PromptScript,
    pub raw_response: String,
    pub latency: Duration,
    pub attempts: u32,
    pub endpoint: String,
}

pub struct Gateway {
    backend: Arc<dyn ChatBackend>,
    config: EndpointConfig,
    limiter: Limiter,
    transcript: Option<TranscriptLog>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn ChatBackend>, config: EndpointConfig) -> Self {
        let limiter = Limiter::new(config.max_in_flight);
        Gateway {
            backend,
            config,
            limiter,
            transcript: None,
        }
    }

    /// Append every exchange to a JSON-lines transcript at `path`.
    pub fn with_transcript(mut self, path: &Path) -> Result<Self, GatewayError> {
        self.transcript = Some(TranscriptLog::open(path)?);
        Ok(self)
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    pub fn endpoint(&self) -> String {
        self.backend.endpoint_id()
    }

    fn payload_bytes(script: &PromptScript) -> usize {
        script.images().map(|i| i.png().len().div_ceil(3) * 4).sum()
    }

    pub fn send(&self, script: &PromptScript) -> Result<LvlmExchange, GatewayError> {
        let record_id = script
            .tag
            .as_ref()
            .map(ScriptTag::record_id)
            .unwrap_or_else(|| "untagged".into());
        let bytes = Self::payload_bytes(script);
        if bytes > self.config.max_payload_bytes {
            return Err(GatewayError::Capacity {
                record_id,
                bytes,
                limit: self.config.max_payload_bytes,
            });
        }
        let params = self.config.params();
        let max_attempts = self.config.max_attempts.max(1);
        let started = Instant::now();
        let mut attempts = 0;
        let outcome = {
            let _permit = self.limiter.acquire();
            loop {
                attempts += 1;
                match self.backend.complete(script, &params) {
                    Ok(text) => break Ok(text),
                    Err(BackendError::Transient(msg)) if attempts < max_attempts => {
                        tracing::warn!(record = %record_id, attempt = attempts, "transient failure: {msg}");
                        std::thread::sleep(self.config.backoff(attempts));
                    }
                    Err(e) => break Err(e.to_string()),
                }
            }
        };
        let latency = started.elapsed();
        let endpoint = self.backend.endpoint_id();
        if let Some(log) = &self.transcript {
            log.append(&self.record(script, &record_id, &endpoint, attempts, latency, &outcome))?;
        }
        match outcome {
            Ok(raw_response) => Ok(LvlmExchange {
                record_id,
                tag: script.tag.clone(),
                script: script.clone(),
                raw_response,
                latency,
                attempts,
                endpoint,
            }),
            Err(message) => Err(GatewayError::Transport {
                record_id,
                attempts,
                message,
            }),
        }
    }

    fn record(
        &self,
        script: &PromptScript,
        record_id: &str,
        endpoint: &str,
        attempts: u32,
        latency: Duration,
        outcome: &Result<String, String>,
    ) -> TranscriptRecord {
        TranscriptRecord {
            record_id: record_id.to_string(),
            case_id: script.tag.as_ref().map(|t| t.case_id.clone()),
            class: script.tag.as_ref().map(|t| t.class),
            step: script.tag.as_ref().map(|t| t.step),
            endpoint: endpoint.to_string(),
            attempts,
            latency_ms: latency.as_millis() as u64,
            turns: script
                .turns
                .iter()
                .map(|t| TranscriptTurn {
                    role: t.role,
                    text: t.text.clone(),
                    images: t.images.iter().map(|i| i.name().to_string()).collect(),
                })
                .collect(),
            raw_response: outcome.as_ref().ok().cloned(),
            error: outcome.as_ref().err().cloned(),
        }
    }
}
