//! Backend configuration file (TOML).
//!
//! ```toml
//! [[backend]]
//! id = "davinci-003"
//! kind = "completion_api"            # completion_api | chat_api | mock | uniform
//! endpoint = "https://api.openai.com/v1"
//! model = "text-davinci-003"
//! api_key_env = "OPENAI_API_KEY"     # read at build time
//! max_batch = 20
//! max_concurrency = 8
//! requests_per_minute = 3000
//!
//! [[backend]]
//! id = "mock"
//! kind = "mock"
//! seed = 7
//! completions = { "1" = 0.7, "2" = 0.2, "3" = 0.1 }
//! token_probs = { "1" = 0.6, "2" = 0.3, "3" = 0.05 }
//! ```
//!
//! `LABELDIST_API_KEY`, when set, overrides every backend's key. A backend
//! with id `uniform` always exists.

use super::{
    Backend, BackendDescriptor, BackendError, BackendKind, HttpBackend, HttpSettings, MockBackend,
    UniformBackend,
};
use crate::labels::LabelSpace;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

pub const API_KEY_OVERRIDE_ENV: &str = "LABELDIST_API_KEY";
pub const UNIFORM_BACKEND_ID: &str = "uniform";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing backend config: {0}")]
    Parse(String),
    #[error("backend `{0}` is declared twice")]
    Duplicate(String),
    #[error("unknown backend `{0}`")]
    Unknown(String),
    #[error("backend `{id}`: {message}")]
    Invalid { id: String, message: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub id: String,
    pub kind: BackendKind,
    #[serde(default)]
    pub chat_template: bool,
    #[serde(default)]
    pub supports_logprobs: Option<bool>,
    // HTTP
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub api_key: Option<String>,
    #[serde(default)]
    pub max_batch: Option<usize>,
    #[serde(default)]
    pub max_concurrency: Option<usize>,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    #[serde(default)]
    pub timeout_secs: Option<u64>,
    #[serde(default)]
    pub max_attempts: Option<u32>,
    #[serde(default)]
    pub backoff_base_ms: Option<u64>,
    #[serde(default)]
    pub max_logprobs: Option<usize>,
    // mock
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub completions: BTreeMap<String, f64>,
    #[serde(default)]
    pub token_probs: BTreeMap<String, f64>,
}

impl BackendSpec {
    pub fn uniform() -> Self {
        Self {
            id: UNIFORM_BACKEND_ID.into(),
            kind: BackendKind::Uniform,
            chat_template: false,
            supports_logprobs: Some(true),
            endpoint: None,
            model: None,
            api_key_env: None,
            api_key: None,
            max_batch: None,
            max_concurrency: None,
            requests_per_minute: None,
            timeout_secs: None,
            max_attempts: None,
            backoff_base_ms: None,
            max_logprobs: None,
            seed: 0,
            completions: BTreeMap::new(),
            token_probs: BTreeMap::new(),
        }
    }

    /// Whether LPR can run against this backend.
    pub fn supports_logprobs(&self) -> bool {
        match self.kind {
            BackendKind::ChatApi => false,
            BackendKind::CompletionApi => self.supports_logprobs.unwrap_or(true),
            BackendKind::Mock => !self.token_probs.is_empty(),
            BackendKind::Uniform => true,
        }
    }

    fn invalid(&self, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            id: self.id.clone(),
            message: message.into(),
        }
    }

    fn api_key(&self) -> Option<String> {
        std::env::var(API_KEY_OVERRIDE_ENV)
            .ok()
            .or_else(|| {
                self.api_key_env
                    .as_deref()
                    .and_then(|var| std::env::var(var).ok())
            })
            .or_else(|| self.api_key.clone())
            .filter(|k| !k.is_empty())
    }

    /// Instantiates the backend. `space` is only used by the uniform kind.
    pub fn build(&self, space: LabelSpace) -> Result<Arc<dyn Backend>, ConfigError> {
        match self.kind {
            BackendKind::Uniform => Ok(Arc::new(UniformBackend::new(self.id.clone(), space))),
            BackendKind::Mock => {
                let to_vec = |m: &BTreeMap<String, f64>| {
                    m.iter().map(|(k, v)| (k.clone(), *v)).collect::<Vec<_>>()
                };
                let mock = MockBackend::new(
                    self.id.clone(),
                    to_vec(&self.completions),
                    to_vec(&self.token_probs),
                    self.seed,
                )?
                .with_chat_template(self.chat_template);
                Ok(Arc::new(mock))
            }
            BackendKind::CompletionApi | BackendKind::ChatApi => {
                if self.kind == BackendKind::ChatApi && self.supports_logprobs == Some(true) {
                    return Err(self.invalid("chat APIs do not expose log probabilities"));
                }
                let endpoint = self
                    .endpoint
                    .clone()
                    .ok_or_else(|| self.invalid("missing `endpoint`"))?;
                let model = self
                    .model
                    .clone()
                    .ok_or_else(|| self.invalid("missing `model`"))?;
                let mut settings = HttpSettings::new(endpoint, model);
                settings.api_key = self.api_key();
                if let Some(v) = self.max_batch {
                    settings.max_batch = v;
                }
                if let Some(v) = self.max_concurrency {
                    settings.max_concurrency = v;
                }
                settings.requests_per_minute = self.requests_per_minute;
                if let Some(v) = self.timeout_secs {
                    settings.timeout_secs = v;
                }
                if let Some(v) = self.max_attempts {
                    settings.max_attempts = v;
                }
                if let Some(v) = self.backoff_base_ms {
                    settings.backoff_base_ms = v;
                }
                if let Some(v) = self.max_logprobs {
                    settings.max_logprobs = v;
                }
                let mut descriptor =
                    BackendDescriptor::new(self.id.clone(), self.kind, self.supports_logprobs());
                descriptor.chat_template = self.chat_template;
                Ok(Arc::new(HttpBackend::new(descriptor, settings)?))
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    backend: Vec<BackendSpec>,
}

/// Backends declared in a config file, plus the built-in `uniform`.
#[derive(Debug, Clone)]
pub struct BackendRegistry {
    specs: BTreeMap<String, BackendSpec>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut specs = BTreeMap::new();
        specs.insert(UNIFORM_BACKEND_ID.to_string(), BackendSpec::uniform());
        Self { specs }
    }
}

impl BackendRegistry {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let file: ConfigFile =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut registry = Self::default();
        for spec in file.backend {
            registry.insert(spec)?;
        }
        Ok(registry)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn insert(&mut self, spec: BackendSpec) -> Result<(), ConfigError> {
        if spec.id == UNIFORM_BACKEND_ID && spec.kind != BackendKind::Uniform {
            return Err(ConfigError::Duplicate(spec.id));
        }
        if spec.id != UNIFORM_BACKEND_ID && self.specs.contains_key(&spec.id) {
            return Err(ConfigError::Duplicate(spec.id));
        }
        self.specs.insert(spec.id.clone(), spec);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&BackendSpec, ConfigError> {
        self.specs
            .get(id)
            .ok_or_else(|| ConfigError::Unknown(id.to_string()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.specs.keys().map(String::as_str)
    }
}
