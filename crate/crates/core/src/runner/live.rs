//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde_json::{json, Value};

use super::{BackendError, ChatBackend, ChatCompletion, ChatRequest, Usage};
use crate::tasks::TaskInstance;

pub struct LiveBackend {
    agent: ureq::Agent,
    url: String,
    api_key: String,
}

impl std::fmt::Debug for LiveBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveBackend").field("url", &self.url).finish_non_exhaustive()
    }
}

impl LiveBackend {
    /// `endpoint` is the API base (e.g. `https://api.openai.com/v1`); the key
    /// is read from the named environment variable and kept only in memory.
    pub fn new(endpoint: &str, api_key_env: &str, timeout: Duration) -> Result<Self, String> {
        let api_key = std::env::var(api_key_env)
            .map_err(|_| format!("environment variable {api_key_env} holding the API key is not set"))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            url: format!("{}/chat/completions", endpoint.trim_end_matches('/')),
            api_key,
        })
    }
}

pub fn request_body(request: &ChatRequest) -> Value {
    json!({
        "model": request.model,
        "messages": [
            {"role": "system", "content": request.system},
            {"role": "user", "content": request.user},
        ],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    })
}

pub fn parse_completion(body: &str) -> Result<ChatCompletion, BackendError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| BackendError::Fatal(format!("response is not JSON: {e}")))?;
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Fatal("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Fatal("response choice has no message content".into()))?;
    let usage = value.get("usage").map(|u| Usage {
        prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        completion_tokens: u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
    });
    Ok(ChatCompletion {
        text: text.to_string(),
        finish_reason: choice.get("finish_reason").and_then(Value::as_str).map(str::to_string),
        usage,
        raw_body: Some(body.to_string()),
    })
}

impl ChatBackend for LiveBackend {
    fn complete(&self, _instance: &TaskInstance, request: &ChatRequest) -> Result<ChatCompletion, BackendError> {
        let response = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(request_body(request));
        let mut response = match response {
            Ok(r) => r,
            Err(ureq::Error::BadUri(uri)) => return Err(BackendError::Fatal(format!("bad endpoint URI {uri}"))),
            Err(e) => return Err(BackendError::Transient(e.to_string())),
        };
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transient(format!("reading response body: {e}")))?;
        match status {
            200..=299 => parse_completion(&body),
            401 | 403 => Err(BackendError::Auth(format!("HTTP {status}: {body}"))),
            408 | 409 | 429 | 500..=599 => Err(BackendError::Transient(format!("HTTP {status}: {body}"))),
            _ => Err(BackendError::Fatal(format!("HTTP {status}: {body}"))),
        }
    }

    fn kind(&self) -> &'static str {
        "live"
    }

    fn cacheable(&self) -> bool {
        true
    }
}
