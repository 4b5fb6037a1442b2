//! OpenAI-compatible HTTP backends.
//!
//! Completion kind: `POST {endpoint}/completions` with
//! `{"model", "prompt", "max_tokens", "temperature", "n", "logprobs"?, "stop"?, "seed"?}`,
//! reading `choices[].text` and `choices[0].logprobs.top_logprobs[0]`.
//!
//! Chat kind: `POST {endpoint}/chat/completions` with a single user message,
//! reading `choices[].message.content`.
//!
//! Transient failures (transport errors, timeouts, 429, 5xx) are retried with
//! exponential backoff and jitter; 401/403 fail immediately.

use super::{
    top_k, Backend, BackendDescriptor, BackendError, BackendKind, GenerationConfig, TokenLogprob,
};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpSettings {
    /// Base URL, e.g. `https://api.openai.com/v1`.
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    /// Completions requested per call.
    #[serde(default = "default_max_batch")]
    pub max_batch: usize,
    /// In-flight request bound.
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
    /// Largest `logprobs` value the provider accepts.
    #[serde(default = "default_max_logprobs")]
    pub max_logprobs: usize,
}

fn default_max_batch() -> usize {
    20
}
fn default_concurrency() -> usize {
    8
}
fn default_timeout() -> u64 {
    60
}
fn default_attempts() -> u32 {
    5
}
fn default_backoff() -> u64 {
    500
}
fn default_max_logprobs() -> usize {
    5
}

impl HttpSettings {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            max_batch: default_max_batch(),
            max_concurrency: default_concurrency(),
            requests_per_minute: None,
            timeout_secs: default_timeout(),
            max_attempts: default_attempts(),
            backoff_base_ms: default_backoff(),
            max_logprobs: default_max_logprobs(),
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Gate {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            permits: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut permits = self.permits.lock().expect("gate lock");
        while *permits == 0 {
            permits = self.freed.wait(permits).expect("gate lock");
        }
        *permits -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("gate lock") += 1;
        self.0.freed.notify_one();
    }
}

enum Failure {
    Transient(String),
    Fatal(BackendError),
}

pub struct HttpBackend {
    descriptor: BackendDescriptor,
    settings: HttpSettings,
    agent: ureq::Agent,
    gate: Gate,
    next_slot: Mutex<Instant>,
    jitter: Mutex<SeededRng>,
    requests: AtomicU64,
}

impl HttpBackend {
    pub fn new(
        descriptor: BackendDescriptor,
        settings: HttpSettings,
    ) -> Result<Self, BackendError> {
        descriptor.validate()?;
        if !matches!(
            descriptor.kind,
            BackendKind::CompletionApi | BackendKind::ChatApi
        ) {
            return Err(BackendError::InvalidRequest(format!(
                "backend `{}` is not an HTTP kind",
                descriptor.id
            )));
        }
        if settings.max_batch == 0 {
            return Err(BackendError::InvalidRequest(
                "max_batch must be positive".into(),
            ));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(settings.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or_default();
        Ok(Self {
            gate: Gate::new(settings.max_concurrency),
            descriptor,
            settings,
            agent,
            next_slot: Mutex::new(Instant::now()),
            jitter: Mutex::new(SeededRng::new(nanos)),
            requests: AtomicU64::new(0),
        })
    }

    pub fn settings(&self) -> &HttpSettings {
        &self.settings
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.settings.endpoint.trim_end_matches('/'), path)
    }

    /// Blocks until the rate limiter grants the next request slot.
    fn wait_for_slot(&self) {
        let Some(rpm) = self.settings.requests_per_minute.filter(|&r| r > 0) else {
            return;
        };
        let interval = Duration::from_secs_f64(60.0 / f64::from(rpm));
        let wake = {
            let mut next = self.next_slot.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + interval;
            slot
        };
        let now = Instant::now();
        if wake > now {
            std::thread::sleep(wake - now);
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let base = self
            .settings
            .backoff_base_ms
            .saturating_mul(1 << attempt.min(16));
        let jitter = self.jitter.lock().expect("jitter lock").next_f64();
        Duration::from_millis(base) + Duration::from_millis((base as f64 * 0.5 * jitter) as u64)
    }

    fn attempt(&self, path: &str, body: &Value) -> Result<Value, Failure> {
        let _permit = self.gate.acquire();
        self.wait_for_slot();
        self.requests.fetch_add(1, Ordering::Relaxed);
        let mut request = self.agent.post(self.url(path));
        if let Some(key) = &self.settings.api_key {
            request = request.header("Authorization", &format!("Bearer {key}"));
        }
        let mut response = match request.send_json(body) {
            Ok(r) => r,
            Err(e) => return Err(classify_transport(e)),
        };
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Failure::Transient(format!("reading body: {e}")))?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| Failure::Fatal(BackendError::Protocol(format!("invalid JSON: {e}")))),
            401 | 403 => Err(Failure::Fatal(BackendError::AuthError(format!(
                "HTTP {status}: {}",
                truncate(&text)
            )))),
            408 | 429 | 500..=599 => Err(Failure::Transient(format!(
                "HTTP {status}: {}",
                truncate(&text)
            ))),
            _ => Err(Failure::Fatal(BackendError::InvalidRequest(format!(
                "HTTP {status}: {}",
                truncate(&text)
            )))),
        }
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let attempts = self.settings.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 0..attempts {
            match self.attempt(path, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Transient(msg)) => {
                    log::warn!(
                        "{}: attempt {}/{} failed: {msg}",
                        self.descriptor.id,
                        attempt + 1,
                        attempts
                    );
                    last = msg;
                    if attempt + 1 < attempts {
                        std::thread::sleep(self.backoff(attempt));
                    }
                }
            }
        }
        Err(BackendError::BackendUnavailable {
            attempts,
            message: last,
        })
    }

    fn request_body(
        &self,
        prompt: &str,
        n: usize,
        config: &GenerationConfig,
        logprobs: Option<usize>,
    ) -> Value {
        let mut body = match self.descriptor.kind {
            BackendKind::ChatApi => json!({
                "model": self.settings.model,
                "messages": [{"role": "user", "content": prompt}],
            }),
            _ => json!({
                "model": self.settings.model,
                "prompt": prompt,
            }),
        };
        body["max_tokens"] = json!(config.max_tokens);
        body["temperature"] = json!(config.temperature);
        body["n"] = json!(n);
        if let Some(k) = logprobs {
            body["logprobs"] = json!(k);
        }
        if !config.stop.is_empty() {
            body["stop"] = json!(config.stop);
        }
        if let Some(seed) = config.seed {
            body["seed"] = json!(seed);
        }
        body
    }

    fn path(&self) -> &'static str {
        match self.descriptor.kind {
            BackendKind::ChatApi => "chat/completions",
            _ => "completions",
        }
    }
}

fn truncate(s: &str) -> &str {
    let end = s.char_indices().nth(200).map_or(s.len(), |(i, _)| i);
    &s[..end]
}

fn classify_transport(e: ureq::Error) -> Failure {
    match e {
        ureq::Error::BadUri(_) | ureq::Error::InvalidProxyUrl => {
            Failure::Fatal(BackendError::InvalidRequest(e.to_string()))
        }
        other => Failure::Transient(other.to_string()),
    }
}

fn choice_texts(response: &Value, kind: BackendKind) -> Result<Vec<String>, BackendError> {
    let choices = response
        .get("choices")
        .and_then(Value::as_array)
        .ok_or_else(|| BackendError::Protocol("missing `choices` array".into()))?;
    let mut indexed: Vec<(u64, String)> = Vec::with_capacity(choices.len());
    for (pos, choice) in choices.iter().enumerate() {
        let text = match kind {
            BackendKind::ChatApi => choice.pointer("/message/content"),
            _ => choice.get("text"),
        }
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Protocol(format!("choice {pos} has no text")))?;
        let index = choice
            .get("index")
            .and_then(Value::as_u64)
            .unwrap_or(pos as u64);
        indexed.push((index, text.to_string()));
    }
    indexed.sort_by_key(|(i, _)| *i);
    Ok(indexed.into_iter().map(|(_, t)| t).collect())
}

fn first_top_logprobs(response: &Value) -> Result<Vec<TokenLogprob>, BackendError> {
    let top = response
        .pointer("/choices/0/logprobs/top_logprobs/0")
        .and_then(Value::as_object)
        .ok_or_else(|| {
            BackendError::Protocol("missing `choices[0].logprobs.top_logprobs[0]`".into())
        })?;
    top.iter()
        .map(|(token, lp)| {
            lp.as_f64()
                .map(|logprob| TokenLogprob {
                    token: token.clone(),
                    logprob,
                })
                .ok_or_else(|| {
                    BackendError::Protocol(format!("logprob for `{token}` is not a number"))
                })
        })
        .collect()
}

impl Backend for HttpBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn sample_completions(
        &self,
        prompt: &str,
        _first_ordinal: u64,
        n: usize,
        config: &GenerationConfig,
    ) -> Result<Vec<String>, BackendError> {
        config.validate()?;
        let mut texts = Vec::with_capacity(n);
        while texts.len() < n {
            let batch = (n - texts.len()).min(self.settings.max_batch);
            let body = self.request_body(prompt, batch, config, None);
            let response = match self.post(self.path(), &body) {
                Ok(r) => r,
                Err(e) if texts.is_empty() => return Err(e),
                Err(e) => {
                    log::warn!(
                        "{}: batch failed after partial progress: {e}",
                        self.descriptor.id
                    );
                    return Err(BackendError::PartialResult {
                        requested: n,
                        received: texts,
                    });
                }
            };
            let got = choice_texts(&response, self.descriptor.kind)?;
            let short = got.len() < batch;
            texts.extend(got.into_iter().take(batch));
            if short {
                return Err(BackendError::PartialResult {
                    requested: n,
                    received: texts,
                });
            }
        }
        Ok(texts)
    }

    fn first_token_logprobs(
        &self,
        prompt: &str,
        config: &GenerationConfig,
    ) -> Result<Vec<TokenLogprob>, BackendError> {
        if !self.descriptor.supports_logprobs {
            return Err(BackendError::LogprobsUnsupported(
                self.descriptor.id.clone(),
            ));
        }
        config.validate()?;
        let k = config.top_k_logprobs.min(self.settings.max_logprobs);
        let one_token = GenerationConfig {
            max_tokens: 1,
            ..config.clone()
        };
        let body = self.request_body(prompt, 1, &one_token, Some(k));
        let response = self.post(self.path(), &body)?;
        Ok(top_k(first_top_logprobs(&response)?, k))
    }

    fn request_count(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_completion_choices_in_index_order() {
        let v = json!({"choices": [
            {"text": " 2", "index": 1},
            {"text": " 1", "index": 0}
        ]});
        assert_eq!(
            choice_texts(&v, BackendKind::CompletionApi).unwrap(),
            vec![" 1", " 2"]
        );
        let chat = json!({"choices": [{"message": {"role": "assistant", "content": "neutral"}}]});
        assert_eq!(
            choice_texts(&chat, BackendKind::ChatApi).unwrap(),
            vec!["neutral"]
        );
        assert!(choice_texts(&json!({}), BackendKind::CompletionApi).is_err());
    }

    #[test]
    fn parses_top_logprobs() {
        let v = json!({"choices": [{"text": "1", "logprobs": {
            "tokens": ["1"], "token_logprobs": [-0.1],
            "top_logprobs": [{"1": -0.1, " 2": -2.5}]
        }}]});
        let mut lps = first_top_logprobs(&v).unwrap();
        lps.sort_by(|a, b| a.token.cmp(&b.token));
        assert_eq!(lps[0].token, " 2");
        assert_eq!(lps[1].logprob, -0.1);
    }

    #[test]
    fn request_body_shape() {
        let d = BackendDescriptor::new("x", BackendKind::CompletionApi, true);
        let b = HttpBackend::new(d, HttpSettings::new("http://h/v1/", "m")).unwrap();
        let mut cfg = GenerationConfig::for_mcr();
        cfg.seed = Some(3);
        let body = b.request_body("hi", 4, &cfg, Some(5));
        assert_eq!(body["prompt"], "hi");
        assert_eq!(body["n"], 4);
        assert_eq!(body["logprobs"], 5);
        assert_eq!(body["seed"], 3);
        assert_eq!(body["temperature"], 1.0);
        assert_eq!(b.url("completions"), "http://h/v1/completions");
    }

    #[test]
    fn chat_backend_cannot_claim_logprobs() {
        let d = BackendDescriptor::new("c", BackendKind::ChatApi, true);
        assert!(HttpBackend::new(d, HttpSettings::new("http://h", "m")).is_err());
    }
}
