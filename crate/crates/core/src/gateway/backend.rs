//! Chat backends: the HTTP chat-completions client and test doubles.

use std::collections::{HashMap, VecDeque};
use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use base64::Engine;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::class::OrganClass;
use crate::prompt::{PromptScript, Role, ScriptStep, IMAGE_MARKER};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    /// Worth retrying: connection problems, timeouts, 429 and 5xx.
    #[error("transient: {0}")]
    Transient(String),
    #[error("fatal: {0}")]
    Fatal(String),
}

/// Anything that can answer a prompt script with text.
pub trait ChatBackend: Send + Sync {
    fn complete(
        &self,
        script: &PromptScript,
        params: &RequestParams,
    ) -> Result<String, BackendError>;

    fn endpoint_id(&self) -> String;
}

/// Decoding settings sent with every request.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestParams {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::System => "system",
        Role::User => "user",
        Role::Assistant => "assistant",
    }
}

/// Chat-completions request body. Each `<image>` marker becomes an
/// `image_url` part holding a base64 PNG data URL, in script order.
pub fn wire_request(script: &PromptScript, params: &RequestParams) -> Value {
    let b64 = base64::engine::general_purpose::STANDARD;
    let messages: Vec<Value> = script
        .turns
        .iter()
        .map(|turn| {
            if turn.images.is_empty() {
                return json!({"role": role_name(turn.role), "content": turn.text});
            }
            let mut parts = Vec::new();
            let mut images = turn.images.iter();
            for (i, chunk) in turn.text.split(IMAGE_MARKER).enumerate() {
                if i > 0 {
                    let img = images.next().expect("marker count checked at build time");
                    parts.push(json!({
                        "type": "image_url",
                        "image_url": {"url": format!("data:image/png;base64,{}", b64.encode(img.png()))}
                    }));
                }
                if !chunk.trim().is_empty() {
                    parts.push(json!({"type": "text", "text": chunk.trim()}));
                }
            }
            json!({"role": role_name(turn.role), "content": parts})
        })
        .collect();
    json!({
        "model": params.model,
        "temperature": params.temperature,
        "max_tokens": params.max_tokens,
        "messages": messages,
    })
}

/// Pull the answer text out of a chat-completions response.
pub fn response_text(body: &Value) -> Option<String> {
    let content = body.pointer("/choices/0/message/content")?;
    match content {
        Value::String(s) => Some(s.clone()),
        Value::Array(parts) => Some(
            parts
                .iter()
                .filter_map(|p| p.get("text").and_then(Value::as_str))
                .collect::<Vec<_>>()
                .join(""),
        ),
        _ => None,
    }
}

/// OpenAI-style chat-completions endpoint over HTTP.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    url: String,
    token: Option<String>,
}

impl HttpBackend {
    pub fn new(
        url: impl Into<String>,
        token: Option<String>,
        timeout: Duration,
    ) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Fatal(format!("http client: {e}")))?;
        Ok(HttpBackend {
            client,
            url: url.into(),
            token,
        })
    }
}

impl ChatBackend for HttpBackend {
    fn complete(
        &self,
        script: &PromptScript,
        params: &RequestParams,
    ) -> Result<String, BackendError> {
        let mut req = self
            .client
            .post(&self.url)
            .json(&wire_request(script, params));
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| BackendError::Transient(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::Transient(format!(
                "endpoint returned {status}"
            )));
        }
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(BackendError::Fatal(format!(
                "endpoint returned {status}: {body}"
            )));
        }
        let body: Value = resp
            .json()
            .map_err(|e| BackendError::Transient(format!("unreadable response body: {e}")))?;
        response_text(&body)
            .ok_or_else(|| BackendError::Fatal("response has no message content".into()))
    }

    fn endpoint_id(&self) -> String {
        self.url.clone()
    }
}

/// Returns queued answers in order and records every script it receives.
#[derive(Default)]
pub struct ScriptedBackend {
    answers: Mutex<VecDeque<Result<String, BackendError>>>,
    seen: Mutex<Vec<PromptScript>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(answers: I) -> Self
    where
        I: IntoIterator<Item = Result<S, BackendError>>,
        S: Into<String>,
    {
        ScriptedBackend {
            answers: Mutex::new(answers.into_iter().map(|a| a.map(Into::into)).collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn replies<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(texts.into_iter().map(Ok::<S, BackendError>))
    }

    pub fn seen(&self) -> Vec<PromptScript> {
        self.seen.lock().unwrap().clone()
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(
        &self,
        script: &PromptScript,
        _params: &RequestParams,
    ) -> Result<String, BackendError> {
        self.seen.lock().unwrap().push(script.clone());
        self.answers.lock().unwrap().pop_front().unwrap_or_else(|| {
            Err(BackendError::Fatal(
                "scripted backend has no more answers".into(),
            ))
        })
    }

    fn endpoint_id(&self) -> String {
        "mock:scripted".into()
    }
}

/// Backend defined by a closure; handy for rule-based mock critics.
pub struct FnBackend<F>(pub F);

impl<F> ChatBackend for FnBackend<F>
where
    F: Fn(&PromptScript) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(
        &self,
        script: &PromptScript,
        _params: &RequestParams,
    ) -> Result<String, BackendError> {
        (self.0)(script)
    }

    fn endpoint_id(&self) -> String {
        "mock:fn".into()
    }
}

#[derive(Debug, Deserialize)]
struct TranscriptAnswer {
    case_id: String,
    class: OrganClass,
    step: ScriptStep,
    #[serde(alias = "response")]
    raw_response: Option<String>,
}

/// Answers from a recorded or hand-written transcript, looked up by
/// (case, class, step). Later records for the same key win.
pub struct TranscriptBackend {
    answers: HashMap<(String, OrganClass, ScriptStep), String>,
    label: String,
}

impl TranscriptBackend {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path)
            .map_err(|e| BackendError::Fatal(format!("mock transcript {}: {e}", path.display())))?;
        let mut answers = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let rec: TranscriptAnswer = serde_json::from_str(line)
                .map_err(|e| BackendError::Fatal(format!("mock transcript line {}: {e}", n + 1)))?;
            if let Some(answer) = rec.raw_response {
                answers.insert((rec.case_id, rec.class, rec.step), answer);
            }
        }
        Ok(TranscriptBackend {
            answers,
            label: format!("mock:{}", path.display()),
        })
    }

    pub fn from_answers(
        answers: impl IntoIterator<Item = ((String, OrganClass, ScriptStep), String)>,
    ) -> Self {
        TranscriptBackend {
            answers: answers.into_iter().collect(),
            label: "mock:transcript".into(),
        }
    }
}

impl ChatBackend for TranscriptBackend {
    fn complete(
        &self,
        script: &PromptScript,
        _params: &RequestParams,
    ) -> Result<String, BackendError> {
        let tag = script
            .tag
            .as_ref()
            .ok_or_else(|| BackendError::Fatal("transcript backend needs tagged scripts".into()))?;
        self.answers
            .get(&(tag.case_id.clone(), tag.class, tag.step))
            .cloned()
            .ok_or_else(|| {
                BackendError::Fatal(format!("no transcript answer for {}", tag.record_id()))
            })
    }

    fn endpoint_id(&self) -> String {
        self.label.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{PromptImage, Turn};

    #[test]
    fn wire_parts_follow_marker_order() {
        let a = PromptImage::from_png("a", vec![1]);
        let b = PromptImage::from_png("b", vec![2]);
        let script = PromptScript {
            kind: crate::prompt::ScriptKind::Comparison,
            turns: vec![Turn {
                role: Role::User,
                text: "x <image> y <image> z".into(),
                images: vec![a, b],
            }],
            tag: None,
        };
        let params = RequestParams {
            model: "m".into(),
            temperature: 0.0,
            max_tokens: 5,
        };
        let body = wire_request(&script, &params);
        let parts = body
            .pointer("/messages/0/content")
            .unwrap()
            .as_array()
            .unwrap();
        let kinds: Vec<&str> = parts.iter().map(|p| p["type"].as_str().unwrap()).collect();
        assert_eq!(kinds, ["text", "image_url", "text", "image_url", "text"]);
        assert_eq!(parts[1]["image_url"]["url"], "data:image/png;base64,AQ==");
        assert_eq!(parts[3]["image_url"]["url"], "data:image/png;base64,Ag==");
    }

    #[test]
    fn reads_string_or_part_content() {
        let s = json!({"choices": [{"message": {"content": "first"}}]});
        assert_eq!(response_text(&s).unwrap(), "first");
        let p = json!({"choices": [{"message": {"content": [{"type": "text", "text": "sec"}, {"type": "text", "text": "ond"}]}}]});
        assert_eq!(response_text(&p).unwrap(), "second");
        assert!(response_text(&json!({})).is_none());
    }
}
