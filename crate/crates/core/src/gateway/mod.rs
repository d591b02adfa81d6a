//! Uniform completion interface over model backends: scripted and
//! rule-based mocks for tests, a generic HTTP completion client for real
//! runs, and a crash-safe JSON-Lines response cache. Retries with
//! exponential backoff on transient transport failures; everything is
//! evaluated at temperature 0 by default so runs are reproducible.

mod backend;
mod cache;

pub use backend::{
    Backend, BackendError, FixedBackend, HttpBackend, NoteMatchBackend, ScriptedBackend,
};
pub use cache::ResponseCache;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("no backend registered under id {0:?}")]
    UnknownBackend(String),
    #[error("backend {backend_id} unavailable after {attempts} attempts: {last}")]
    Unavailable {
        backend_id: String,
        attempts: u32,
        last: String,
    },
    #[error("backend {backend_id} rejected the request (status {status:?}): {excerpt}")]
    Rejected {
        backend_id: String,
        status: Option<u16>,
        excerpt: String,
    },
    #[error("backend {backend_id} ran out of scripted responses")]
    ScriptExhausted { backend_id: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cache error: {0}")]
    Cache(String),
}

/// One completion request. Temperature 0 and empty stop sequences are the
/// defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRequest {
    pub backend_id: String,
    pub prompt: String,
    pub max_output_tokens: u32,
    pub temperature: f64,
    pub stop_sequences: Vec<String>,
}

impl ModelRequest {
    pub fn new(backend_id: impl Into<String>, prompt: impl Into<String>) -> Self {
        ModelRequest {
            backend_id: backend_id.into(),
            prompt: prompt.into(),
            max_output_tokens: 1024,
            temperature: 0.0,
            stop_sequences: Vec::new(),
        }
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("empty prompt".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
    pub cached: bool,
}

/// Stable content hash over everything that affects a completion.
pub fn cache_key(request: &ModelRequest) -> String {
    #[derive(Serialize)]
    struct KeyView<'a> {
        backend_id: &'a str,
        prompt: &'a str,
        max_output_tokens: u32,
        temperature: f64,
        stop_sequences: &'a [String],
    }
    let canonical = serde_json::to_vec(&KeyView {
        backend_id: &request.backend_id,
        prompt: &request.prompt,
        max_output_tokens: request.max_output_tokens,
        temperature: request.temperature,
        stop_sequences: &request.stop_sequences,
    })
    .expect("key view serializes cleanly");
    let mut hasher = Sha256::new();
    hasher.update(&canonical);
    format!("{:x}", hasher.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay_ms: 250,
        }
    }
}

impl RetryPolicy {
    /// No waiting between attempts; used by tests.
    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            base_delay_ms: 0,
        }
    }

    fn delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms.saturating_mul(1u64 << attempt.min(16)))
    }
}

/// Backend call counters for the run manifest.
#[derive(Debug, Default)]
struct Stats {
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
    failures: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GatewayStats {
    pub backend_calls: u64,
    pub cache_hits: u64,
    pub failures: u64,
}

impl GatewayStats {
    pub fn cache_hit_ratio(&self) -> f64 {
        let total = self.backend_calls + self.cache_hits;
        if total == 0 {
            0.0
        } else {
            self.cache_hits as f64 / total as f64
        }
    }
}

pub struct Gateway {
    backends: BTreeMap<String, Arc<dyn Backend>>,
    cache: Option<ResponseCache>,
    retry: RetryPolicy,
    stats: Stats,
}

impl Gateway {
    pub fn new(retry: RetryPolicy) -> Self {
        Gateway {
            backends: BTreeMap::new(),
            cache: None,
            retry,
            stats: Stats::default(),
        }
    }

    pub fn register(&mut self, id: impl Into<String>, backend: Arc<dyn Backend>) {
        self.backends.insert(id.into(), backend);
    }

    pub fn with_cache(mut self, cache: ResponseCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn has_backend(&self, id: &str) -> bool {
        self.backends.contains_key(id)
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            backend_calls: self.stats.backend_calls.load(Ordering::Relaxed),
            cache_hits: self.stats.cache_hits.load(Ordering::Relaxed),
            failures: self.stats.failures.load(Ordering::Relaxed),
        }
    }

    /// Complete a request: cache first, then the backend with retries on
    /// transient errors.
    pub fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        request.validate()?;
        let backend = self
            .backends
            .get(&request.backend_id)
            .ok_or_else(|| GatewayError::UnknownBackend(request.backend_id.clone()))?;

        let key = cache_key(request);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key) {
                self.stats.cache_hits.fetch_add(1, Ordering::Relaxed);
                return Ok(ModelResponse {
                    text: hit.text,
                    input_tokens: hit.input_tokens,
                    output_tokens: hit.output_tokens,
                    cached: true,
                });
            }
        }

        let mut attempt = 0;
        let response = loop {
            attempt += 1;
            self.stats.backend_calls.fetch_add(1, Ordering::Relaxed);
            match backend.complete(request) {
                Ok(reply) => break reply,
                Err(BackendError::Transient(message)) => {
                    if attempt >= self.retry.max_attempts {
                        self.stats.failures.fetch_add(1, Ordering::Relaxed);
                        return Err(GatewayError::Unavailable {
                            backend_id: request.backend_id.clone(),
                            attempts: attempt,
                            last: message,
                        });
                    }
                    let delay = self.retry.delay(attempt - 1);
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                }
                Err(BackendError::Rejected { status, excerpt }) => {
                    self.stats.failures.fetch_add(1, Ordering::Relaxed);
                    return Err(GatewayError::Rejected {
                        backend_id: request.backend_id.clone(),
                        status,
                        excerpt,
                    });
                }
                Err(BackendError::ScriptExhausted) => {
                    self.stats.failures.fetch_add(1, Ordering::Relaxed);
                    return Err(GatewayError::ScriptExhausted {
                        backend_id: request.backend_id.clone(),
                    });
                }
            }
        };

        if let Some(cache) = &self.cache {
            cache
                .put(&key, &response)
                .map_err(|e| GatewayError::Cache(e.to_string()))?;
        }
        Ok(ModelResponse {
            text: response.text,
            input_tokens: response.input_tokens,
            output_tokens: response.output_tokens,
            cached: false,
        })
    }
}

/// What a backend returns before the gateway wraps it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendReply {
    pub text: String,
    pub input_tokens: Option<u64>,
    pub output_tokens: Option<u64>,
}

impl BackendReply {
    pub fn text(text: impl Into<String>) -> Self {
        BackendReply {
            text: text.into(),
            input_tokens: None,
            output_tokens: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gateway_with(backend: Arc<dyn Backend>) -> Gateway {
        let mut gw = Gateway::new(RetryPolicy::immediate(3));
        gw.register("mock", backend);
        gw
    }

    #[test]
    fn scripted_responses_are_fifo_and_exhaustion_is_reported() {
        let backend = Arc::new(ScriptedBackend::from_responses(["B", "C"]));
        let gw = gateway_with(backend);
        let req = ModelRequest::new("mock", "choose");
        assert_eq!(gw.complete(&req).unwrap().text, "B");
        assert_eq!(gw.complete(&req).unwrap().text, "C");
        assert!(matches!(
            gw.complete(&req),
            Err(GatewayError::ScriptExhausted { .. })
        ));
    }

    #[test]
    fn scripted_response_is_not_cached_flagged() {
        let backend = Arc::new(ScriptedBackend::from_responses(["B"]));
        let gw = gateway_with(backend);
        let resp = gw.complete(&ModelRequest::new("mock", "x")).unwrap();
        assert_eq!(resp.text, "B");
        assert!(!resp.cached);
    }

    #[test]
    fn retries_recover_from_transient_failures() {
        let backend = ScriptedBackend::from_responses(["ok"]);
        backend.fail_transiently(2);
        let gw = gateway_with(Arc::new(backend));
        let resp = gw.complete(&ModelRequest::new("mock", "x")).unwrap();
        assert_eq!(resp.text, "ok");
        assert_eq!(gw.stats().backend_calls, 3);
    }

    #[test]
    fn retry_limit_exhaustion_is_unavailable() {
        let backend = ScriptedBackend::from_responses(["never reached"]);
        backend.fail_transiently(5);
        let gw = gateway_with(Arc::new(backend));
        let err = gw.complete(&ModelRequest::new("mock", "x")).unwrap_err();
        match err {
            GatewayError::Unavailable { attempts, .. } => assert_eq!(attempts, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejection_is_not_retried() {
        let backend = ScriptedBackend::from_responses(["never reached"]);
        backend.fail_rejected("bad request");
        let gw = gateway_with(Arc::new(backend));
        assert!(matches!(
            gw.complete(&ModelRequest::new("mock", "x")),
            Err(GatewayError::Rejected { .. })
        ));
        assert_eq!(gw.stats().backend_calls, 1);
    }

    #[test]
    fn cache_key_is_stable_and_sensitive() {
        let a = ModelRequest::new("m", "prompt text");
        let b = ModelRequest::new("m", "prompt text");
        assert_eq!(cache_key(&a), cache_key(&b));

        let mut c = a.clone();
        c.prompt.push('!');
        assert_ne!(cache_key(&a), cache_key(&c));

        let mut d = a.clone();
        d.temperature = 0.5;
        assert_ne!(cache_key(&a), cache_key(&d));

        let mut e = a.clone();
        e.backend_id = "other".into();
        assert_ne!(cache_key(&a), cache_key(&e));

        let mut f = a.clone();
        f.stop_sequences.push("stop".into());
        assert_ne!(cache_key(&a), cache_key(&f));

        let mut g = a.clone();
        g.max_output_tokens += 1;
        assert_ne!(cache_key(&a), cache_key(&g));
    }

    #[test]
    fn identical_request_twice_with_cache_hits_second_time() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(&dir.path().join("cache.jsonl")).unwrap();
        let backend = Arc::new(ScriptedBackend::from_responses(["first"]));
        let mut gw = Gateway::new(RetryPolicy::immediate(1));
        gw.register("mock", backend);
        let gw = gw.with_cache(cache);

        let req = ModelRequest::new("mock", "same prompt");
        let first = gw.complete(&req).unwrap();
        assert!(!first.cached);
        let second = gw.complete(&req).unwrap();
        assert!(second.cached);
        assert_eq!(first.text, second.text);
        let stats = gw.stats();
        assert_eq!(stats.backend_calls, 1);
        assert_eq!(stats.cache_hits, 1);
        assert!((stats.cache_hit_ratio() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn empty_prompt_is_invalid() {
        let gw = gateway_with(Arc::new(FixedBackend::new("x")));
        assert!(matches!(
            gw.complete(&ModelRequest::new("mock", "")),
            Err(GatewayError::InvalidRequest(_))
        ));
    }

    #[test]
    fn unknown_backend_is_an_error() {
        let gw = Gateway::new(RetryPolicy::default());
        assert!(matches!(
            gw.complete(&ModelRequest::new("ghost", "x")),
            Err(GatewayError::UnknownBackend(_))
        ));
    }
}
