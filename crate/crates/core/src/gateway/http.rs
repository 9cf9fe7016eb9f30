//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde_json::{json, Value};

use super::provider::{Provider, ProviderError, ProviderReply, Usage};
use super::ModelConfig;

pub const API_KEY_VAR: &str = "LLM_API_KEY";

/// Environment variable holding the credential override for `provider_id`.
pub fn provider_key_var(provider_id: &str) -> String {
    let suffix: String = provider_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() {
                c.to_ascii_uppercase()
            } else {
                '_'
            }
        })
        .collect();
    format!("{API_KEY_VAR}_{suffix}")
}

/// Looks up the credential: `LLM_API_KEY_<PROVIDER>` first, then `LLM_API_KEY`.
pub fn resolve_api_key(provider_id: &str, env: impl Fn(&str) -> Option<String>) -> Option<String> {
    env(&provider_key_var(provider_id))
        .or_else(|| env(API_KEY_VAR))
        .filter(|k| !k.trim().is_empty())
}

pub struct HttpProvider {
    name: String,
    endpoint: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpProvider {
    pub fn new(provider_id: &str, base_url: &str, api_key: String) -> Result<Self, ProviderError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ProviderError::Fatal(e.to_string()))?;
        Ok(HttpProvider {
            name: provider_id.to_string(),
            endpoint: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
            client,
        })
    }

    /// Reads the credential from the process environment.
    pub fn from_env(provider_id: &str, base_url: &str) -> Result<Self, ProviderError> {
        let key = resolve_api_key(provider_id, |k| std::env::var(k).ok()).ok_or_else(|| {
            ProviderError::Auth(format!(
                "no credential: set {} or {API_KEY_VAR}",
                provider_key_var(provider_id)
            ))
        })?;
        Self::new(provider_id, base_url, key)
    }
}

/// Request body for one prompt.
pub fn request_body(prompt: &str, config: &ModelConfig) -> Value {
    let mut body = json!({
        "model": config.model_id,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": config.temperature,
        "max_tokens": config.max_output_tokens,
    });
    if let Some(seed) = config.seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Extracts the first choice's content and the usage block.
pub fn parse_completion(value: &Value) -> Result<ProviderReply, ProviderError> {
    let body = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderError::Fatal("response has no choices[0].message.content".into()))?
        .to_string();
    let usage = Usage {
        prompt_tokens: value
            .pointer("/usage/prompt_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
        completion_tokens: value
            .pointer("/usage/completion_tokens")
            .and_then(Value::as_u64)
            .unwrap_or(0),
    };
    Ok(ProviderReply { body, usage })
}

/// Maps an HTTP status to the retry class.
pub fn classify_status(status: u16, detail: String) -> ProviderError {
    match status {
        401 | 403 => ProviderError::Auth(detail),
        408 | 409 | 425 | 429 | 500..=599 => ProviderError::Transient(detail),
        _ => ProviderError::Fatal(detail),
    }
}

impl Provider for HttpProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn send(&self, prompt: &str, config: &ModelConfig) -> Result<ProviderReply, ProviderError> {
        let response = self
            .client
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&request_body(prompt, config))
            .send()
            .map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(classify_status(status.as_u16(), format!("HTTP {status}: {text}")));
        }
        let value: Value = response
            .json()
            .map_err(|e| ProviderError::Transient(format!("unreadable body: {e}")))?;
        parse_completion(&value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn provider_key_takes_precedence() {
        let env: HashMap<&str, &str> = [("LLM_API_KEY", "global"), ("LLM_API_KEY_OPEN_AI", "specific")].into();
        let get = |k: &str| env.get(k).map(|v| v.to_string());
        assert_eq!(resolve_api_key("open-ai", get).as_deref(), Some("specific"));
        assert_eq!(resolve_api_key("other", get).as_deref(), Some("global"));
        assert_eq!(resolve_api_key("x", |_| None), None);
    }

    #[test]
    fn completion_parsing() {
        let v = json!({
            "choices": [{"message": {"role": "assistant", "content": "{\"index\": 1}"}}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 3}
        });
        let reply = parse_completion(&v).unwrap();
        assert_eq!(reply.body, "{\"index\": 1}");
        assert_eq!(reply.usage.prompt_tokens, 10);
        assert!(parse_completion(&json!({})).is_err());
    }

    #[test]
    fn status_classes() {
        assert!(matches!(classify_status(401, String::new()), ProviderError::Auth(_)));
        assert!(matches!(
            classify_status(429, String::new()),
            ProviderError::Transient(_)
        ));
        assert!(matches!(
            classify_status(503, String::new()),
            ProviderError::Transient(_)
        ));
        assert!(matches!(classify_status(400, String::new()), ProviderError::Fatal(_)));
    }

    #[test]
    fn seed_is_forwarded_when_set() {
        let mut cfg = ModelConfig::default();
        assert!(request_body("p", &cfg).get("seed").is_none());
        cfg.seed = Some(7);
        assert_eq!(request_body("p", &cfg)["seed"], 7);
        assert_eq!(request_body("p", &cfg)["temperature"], 0.0);
    }
}
