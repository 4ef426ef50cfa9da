//! Runs task instances against a chat backend with caching, bounded
//! parallelism, rate limiting and retry.

pub mod cache;
pub mod live;
pub mod mock;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::tasks::{TaskInstance, TaskKind};

pub use cache::ResponseCache;
pub use live::{parse_completion, request_body, LiveBackend};
pub use mock::{interpolate, Curve, MockBackend, MockModel, REPEATED_SENTENCE};

pub const DEFAULT_MAX_TOKENS: u32 = 64;
pub const DEFAULT_COT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub system: String,
    pub user: String,
    /// Serialized as a decimal string so the request hash is exact.
    #[serde(with = "decimal")]
    pub temperature: f64,
    pub max_tokens: u32,
}

mod decimal {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatCompletion {
    pub text: String,
    pub finish_reason: Option<String>,
    pub usage: Option<Usage>,
    /// Verbatim HTTP body, kept for audit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_body: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("backend failure: {0}")]
    Fatal(String),
}

pub trait ChatBackend: Send + Sync {
    fn complete(&self, instance: &TaskInstance, request: &ChatRequest) -> Result<ChatCompletion, BackendError>;

    /// `"live"` or `"mock"`.
    fn kind(&self) -> &'static str;

    /// Whether completions may be served from the on-disk cache.
    fn cacheable(&self) -> bool;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff_ms: 1_000,
            max_backoff_ms: 60_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): doubling from the
    /// initial backoff, capped at the maximum.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

/// Token bucket refilled continuously at `requests_per_minute`, holding at
/// most `burst` tokens.
#[derive(Debug)]
pub struct RateLimiter {
    per_second: f64,
    burst: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn new(requests_per_minute: u32, burst: u32) -> Self {
        let burst = burst.max(1) as f64;
        Self {
            per_second: requests_per_minute.max(1) as f64 / 60.0,
            burst,
            state: Mutex::new((burst, Instant::now())),
        }
    }

    /// Blocks until a request may be sent.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("rate limiter lock");
                let now = Instant::now();
                let (tokens, last) = *state;
                let tokens = (tokens + now.duration_since(last).as_secs_f64() * self.per_second).min(self.burst);
                if tokens >= 1.0 {
                    *state = (tokens - 1.0, now);
                    return;
                }
                *state = (tokens, now);
                Duration::from_secs_f64((1.0 - tokens) / self.per_second)
            };
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub instance_id: String,
    /// Verbatim model output; empty when `error` is set.
    pub raw_text: String,
    pub finish_reason: Option<String>,
    pub usage: Option<Usage>,
    pub latency_ms: u64,
    pub backend: String,
    pub model: String,
    pub max_tokens: u32,
    pub cache_hit: bool,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ModelResponse {
    /// True when generation stopped at the token limit.
    pub fn truncated(&self) -> bool {
        self.finish_reason.as_deref() == Some("length")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("run aborted on instance {instance}: {message}")]
    Auth { instance: String, message: String },
}

/// Settings shared by every request of a run.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub model: String,
    pub temperature: f64,
    /// Overrides the per-task default when set.
    pub max_tokens: Option<u32>,
    pub parallelism: usize,
    pub retry: RetryPolicy,
}

impl RunSettings {
    pub fn max_tokens_for(&self, task: TaskKind) -> u32 {
        self.max_tokens.unwrap_or(match task {
            TaskKind::Similarity => DEFAULT_COT_MAX_TOKENS,
            _ => DEFAULT_MAX_TOKENS,
        })
    }

    pub fn request(&self, instance: &TaskInstance) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            system: instance.prompt.system.clone(),
            user: instance.prompt.user.clone(),
            temperature: self.temperature,
            max_tokens: self.max_tokens_for(instance.task),
        }
    }
}

pub struct Runner<'a> {
    pub backend: &'a dyn ChatBackend,
    pub settings: RunSettings,
    pub cache: Option<&'a ResponseCache>,
    pub limiter: Option<&'a RateLimiter>,
}

impl Runner<'_> {
    /// One response per instance, in input order. Exhausted retries and
    /// fatal errors become per-instance error records; an authentication
    /// failure stops the run.
    pub fn run(&self, instances: &[TaskInstance]) -> Result<Vec<ModelResponse>, RunError> {
        let slots: Vec<Mutex<Option<ModelResponse>>> = instances.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let auth_error: Mutex<Option<RunError>> = Mutex::new(None);
        let workers = self.settings.parallelism.clamp(1, instances.len().max(1));
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if abort.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(instance) = instances.get(i) else {
                        break;
                    };
                    match self.run_one(instance) {
                        Ok(response) => *slots[i].lock().expect("slot lock") = Some(response),
                        Err(e) => {
                            abort.store(true, Ordering::SeqCst);
                            auth_error.lock().expect("error lock").get_or_insert(e);
                        }
                    }
                });
            }
        });
        if let Some(e) = auth_error.into_inner().expect("error lock") {
            return Err(e);
        }
        Ok(slots
            .into_iter()
            .map(|s| s.into_inner().expect("slot lock").expect("every slot filled"))
            .collect())
    }

    fn run_one(&self, instance: &TaskInstance) -> Result<ModelResponse, RunError> {
        let request = self.settings.request(instance);
        let cache = self.cache.filter(|_| self.backend.cacheable());
        let respond = |completion: ChatCompletion, latency_ms, cache_hit, attempts| ModelResponse {
            instance_id: instance.id.clone(),
            raw_text: completion.text,
            finish_reason: completion.finish_reason,
            usage: completion.usage,
            latency_ms,
            backend: self.backend.kind().to_string(),
            model: request.model.clone(),
            max_tokens: request.max_tokens,
            cache_hit,
            attempts,
            error: None,
        };
        if let Some(hit) = cache.and_then(|c| c.get(&request)) {
            return Ok(respond(hit, 0, true, 0));
        }
        let mut attempts = 0;
        let failure = loop {
            attempts += 1;
            if let Some(limiter) = self.limiter {
                limiter.acquire();
            }
            let started = Instant::now();
            match self.backend.complete(instance, &request) {
                Ok(completion) => {
                    let latency = if self.backend.cacheable() { started.elapsed().as_millis() as u64 } else { 0 };
                    if let Some(c) = cache {
                        if let Err(e) = c.put(&request, &completion) {
                            log::warn!("could not cache response for {}: {e}", instance.id);
                        }
                    }
                    return Ok(respond(completion, latency, false, attempts));
                }
                Err(BackendError::Auth(message)) => {
                    return Err(RunError::Auth {
                        instance: instance.id.clone(),
                        message,
                    })
                }
                Err(BackendError::Transient(m)) if attempts < self.settings.retry.max_attempts => {
                    let delay = self.settings.retry.backoff(attempts);
                    log::warn!("{}: {m}; retrying in {delay:?}", instance.id);
                    std::thread::sleep(delay);
                }
                Err(e) => break e,
            }
        };
        Ok(ModelResponse {
            error: Some(failure.to_string()),
            ..respond(
                ChatCompletion {
                    text: String::new(),
                    finish_reason: None,
                    usage: None,
                    raw_body: None,
                },
                0,
                false,
                attempts,
            )
        })
    }
}
