//! Prompt rendering, provider calls with retry and rate limiting, and
//! structured-reply validation.

mod audit;
mod http;
mod limiter;
mod mock;
pub mod parse;
mod provider;
pub mod templates;

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use audit::{AuditEntry, AuditLog};
pub use http::{
    classify_status, parse_completion, provider_key_var, request_body, resolve_api_key, HttpProvider, API_KEY_VAR,
};
pub use limiter::RateLimiter;
pub use mock::MockProvider;
pub use parse::{parse_classification, ParseError, ParsedClassification};
pub use provider::{Provider, ProviderError, ProviderReply, ReplayProvider, ScriptedProvider, Usage};
pub use templates::{context, render_prompt, Context, PromptTemplate, PromptText, TemplateError, TemplateId};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("gave up after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("unusable reply after re-ask: {0}")]
    Parse(#[from] ParseError),
}

/// Per-stage model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub provider_id: String,
    pub model_id: String,
    pub base_url: Option<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub seed: Option<u64>,
    pub requests_per_minute: u32,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            provider_id: "mock".into(),
            model_id: "mock-1".into(),
            base_url: None,
            temperature: 0.0,
            max_output_tokens: 1024,
            seed: None,
            requests_per_minute: 60,
            max_retries: 3,
            backoff_base_ms: 500,
            max_in_flight: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.requests_per_minute == 0 {
            return Err(GatewayError::Config("requests_per_minute must be > 0".into()));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GatewayError::Config("temperature must be >= 0".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(GatewayError::Config("model_id is empty".into()));
        }
        Ok(())
    }

    pub fn backoff_base(&self) -> Duration {
        Duration::from_millis(self.backoff_base_ms)
    }
}

/// A provider reply plus call metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawResponse {
    pub body: String,
    pub usage: Usage,
    pub attempts: u32,
}

impl RawResponse {
    pub fn new(body: impl Into<String>) -> Self {
        RawResponse {
            body: body.into(),
            usage: Usage::default(),
            attempts: 1,
        }
    }
}

/// Provider plus retry policy, shared rate limiter and optional audit log.
/// Cheap to clone; clones share the limiter and log.
#[derive(Clone)]
pub struct Gateway {
    provider: Arc<dyn Provider>,
    config: ModelConfig,
    limiter: Arc<RateLimiter>,
    audit: Option<Arc<AuditLog>>,
}

impl Gateway {
    pub fn new(provider: Arc<dyn Provider>, config: ModelConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        let limiter = Arc::new(RateLimiter::per_minute(config.requests_per_minute));
        Ok(Gateway {
            provider,
            config,
            limiter,
            audit: None,
        })
    }

    /// Offline gateway backed by [`MockProvider`].
    pub fn mock(seed: u64) -> Self {
        let config = ModelConfig {
            seed: Some(seed),
            ..ModelConfig::default()
        };
        Gateway::new(Arc::new(MockProvider::new(seed)), config).expect("default config is valid")
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = Some(audit);
        self
    }

    /// Shares another gateway's limiter (same provider, different stage config).
    pub fn with_limiter(mut self, limiter: Arc<RateLimiter>) -> Self {
        self.limiter = limiter;
        self
    }

    pub fn limiter(&self) -> Arc<RateLimiter> {
        Arc::clone(&self.limiter)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    /// Sends `prompt`, retrying transient failures up to `max_retries` times
    /// with exponential backoff. Authentication failures are never retried.
    pub fn complete(&self, prompt: &PromptText) -> Result<RawResponse, GatewayError> {
        let started_at = chrono::Utc::now().to_rfc3339();
        let mut attempts = 0u32;
        let result = loop {
            attempts += 1;
            if self.provider.rate_limited() {
                self.limiter.acquire();
            }
            match self.provider.send(prompt.as_str(), &self.config) {
                Ok(reply) => {
                    break Ok(RawResponse {
                        body: reply.body,
                        usage: reply.usage,
                        attempts,
                    })
                }
                Err(ProviderError::Auth(m)) => break Err(GatewayError::Auth(m)),
                Err(ProviderError::Transient(m)) if attempts <= self.config.max_retries => {
                    log::debug!("transient failure (attempt {attempts}): {m}");
                    let backoff = self.config.backoff_base() * 2u32.saturating_pow(attempts - 1);
                    if !backoff.is_zero() {
                        thread::sleep(backoff);
                    }
                }
                Err(ProviderError::Transient(message) | ProviderError::Fatal(message)) => {
                    break Err(GatewayError::Transport { attempts, message })
                }
            }
        };
        if let Some(audit) = &self.audit {
            let (body, error) = match &result {
                Ok(r) => (Some(r.body.as_str()), None),
                Err(e) => (None, Some(e.to_string())),
            };
            audit.append(&AuditEntry {
                prompt_hash: prompt.hash(),
                provider: self.provider.name(),
                model: &self.config.model_id,
                prompt: prompt.as_str(),
                body,
                error,
                attempts,
                started_at,
                finished_at: chrono::Utc::now().to_rfc3339(),
            });
        }
        result
    }

    /// Sends `prompt` and parses the reply. An unusable reply triggers one
    /// re-ask with a correction appended (`hint` is added to it).
    pub fn ask<T>(
        &self,
        prompt: &PromptText,
        hint: &str,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, GatewayError> {
        let first = self.complete(prompt)?;
        match parse(&first.body) {
            Ok(v) => Ok(v),
            Err(e) if e.is_retryable() => {
                log::debug!("re-asking after unusable reply: {e}");
                let retry = prompt.with_correction(&e.to_string(), hint);
                let second = self.complete(&retry)?;
                Ok(parse(&second.body)?)
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Renders a classification template, sends it and validates the reply.
    pub fn classify(
        &self,
        stage: TemplateId,
        ctx: &Context,
        expected_index: u64,
    ) -> Result<ParsedClassification, GatewayError> {
        let prompt = render_prompt(stage, ctx)?;
        self.ask(&prompt, "", |body| parse_classification(body, expected_index, stage))
    }
}
