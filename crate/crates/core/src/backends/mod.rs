//! Access to generative models: sampled completions and top-k first-token
//! log probabilities.
//!
//! Every backend implements [`Backend`]. [`CachedBackend`] wraps any backend
//! with the durable response cache so that each sample is addressable by
//! (backend, prompt, config, ordinal) and reruns never touch the network.

mod cache;
mod config;
mod http;
mod mock;

pub use cache::{
    cache_get, cache_put, fingerprint, CacheError, CachedBackend, RequestKind, ResponseCache,
    CACHE_FILE,
};
pub use config::{
    BackendRegistry, BackendSpec, ConfigError, API_KEY_OVERRIDE_ENV, UNIFORM_BACKEND_ID,
};
pub use http::{HttpBackend, HttpSettings};
pub use mock::{MockBackend, UniformBackend};

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_tokens: usize,
    pub top_k_logprobs: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stop: Vec<String>,
    /// Forwarded to APIs that accept a sampling seed and to the mock.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl GenerationConfig {
    /// Temperature 1, ten new tokens.
    pub fn for_mcr() -> Self {
        Self {
            temperature: 1.0,
            max_tokens: 10,
            top_k_logprobs: 5,
            stop: Vec::new(),
            seed: None,
        }
    }

    /// Temperature 1, a single token, top-5 log probabilities.
    pub fn for_lpr() -> Self {
        Self {
            max_tokens: 1,
            ..Self::for_mcr()
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} must be a nonnegative number",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_tokens must be positive".into(),
            ));
        }
        if self.top_k_logprobs == 0 {
            return Err(BackendError::InvalidRequest(
                "top_k_logprobs must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self::for_mcr()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogprob {
    pub token: String,
    /// Natural-log probability.
    pub logprob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    /// OpenAI-completions-compatible endpoint (`/completions`).
    CompletionApi,
    /// Chat endpoint (`/chat/completions`); no log probabilities.
    ChatApi,
    Mock,
    /// Offline chance baseline.
    Uniform,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::CompletionApi => "completion",
            Self::ChatApi => "chat",
            Self::Mock => "mock",
            Self::Uniform => "uniform",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub id: String,
    pub kind: BackendKind,
    pub supports_logprobs: bool,
    /// Wrap prompts in `### Human:` / `### Assistant:` turns.
    #[serde(default)]
    pub chat_template: bool,
}

impl BackendDescriptor {
    pub fn new(id: impl Into<String>, kind: BackendKind, supports_logprobs: bool) -> Self {
        Self {
            id: id.into(),
            kind,
            supports_logprobs,
            chat_template: false,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.kind == BackendKind::ChatApi && self.supports_logprobs {
            return Err(BackendError::InvalidRequest(format!(
                "backend `{}`: chat APIs do not expose log probabilities",
                self.id
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    BackendUnavailable { attempts: u32, message: String },
    #[error("authentication rejected: {0}")]
    AuthError(String),
    #[error("backend returned {} of {requested} requested completions", received.len())]
    PartialResult {
        requested: usize,
        received: Vec<String>,
    },
    #[error("backend `{0}` does not expose log probabilities")]
    LogprobsUnsupported(String),
    #[error("malformed response: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// A generative model the harness can query.
///
/// Implementations must be shareable across worker threads. Sample
/// `ordinal`s make individual draws addressable; backends that sample
/// randomly may ignore them, deterministic backends key their draws on them.
pub trait Backend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// Returns exactly `n` completions for ordinals
    /// `first_ordinal..first_ordinal + n`.
    fn sample_completions(
        &self,
        prompt: &str,
        first_ordinal: u64,
        n: usize,
        config: &GenerationConfig,
    ) -> Result<Vec<String>, BackendError>;

    /// Top-k candidates for the first generated token, most probable first.
    fn first_token_logprobs(
        &self,
        prompt: &str,
        config: &GenerationConfig,
    ) -> Result<Vec<TokenLogprob>, BackendError>;

    /// Requests issued to the underlying model so far.
    fn request_count(&self) -> u64;
}

pub fn sample_completions(
    backend: &dyn Backend,
    prompt: &str,
    n: usize,
    config: &GenerationConfig,
) -> Result<Vec<String>, BackendError> {
    if n == 0 {
        return Err(BackendError::InvalidRequest("n must be at least 1".into()));
    }
    backend.sample_completions(prompt, 0, n, config)
}

pub fn first_token_logprobs(
    backend: &dyn Backend,
    prompt: &str,
    config: &GenerationConfig,
) -> Result<Vec<TokenLogprob>, BackendError> {
    if !backend.descriptor().supports_logprobs {
        return Err(BackendError::LogprobsUnsupported(
            backend.descriptor().id.clone(),
        ));
    }
    backend.first_token_logprobs(prompt, config)
}

/// Sorts descending by logprob (ties by token) and keeps the first `k`.
pub(crate) fn top_k(mut candidates: Vec<TokenLogprob>, k: usize) -> Vec<TokenLogprob> {
    candidates.sort_by(|a, b| {
        b.logprob
            .total_cmp(&a.logprob)
            .then_with(|| a.token.cmp(&b.token))
    });
    candidates.truncate(k);
    candidates
}
