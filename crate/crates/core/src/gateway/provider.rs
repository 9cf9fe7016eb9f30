use std::collections::{HashMap, VecDeque};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ModelConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderReply {
    pub body: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    /// Worth retrying: rate limiting, timeouts, 5xx.
    #[error("transient provider failure: {0}")]
    Transient(String),
    /// Bad or missing credential. Never retried.
    #[error("authentication failed: {0}")]
    Auth(String),
    /// Anything else the provider rejected outright.
    #[error("provider rejected the request: {0}")]
    Fatal(String),
}

/// A chat-completion backend. Implementations must be safe to share across
/// worker threads.
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;

    fn send(&self, prompt: &str, config: &ModelConfig) -> Result<ProviderReply, ProviderError>;

    /// Local providers skip the shared request-rate limiter.
    fn rate_limited(&self) -> bool {
        true
    }
}

/// Replies from a fixed queue, in order. Useful for tests and for exercising
/// retry and re-ask paths.
#[derive(Debug, Default)]
pub struct ScriptedProvider {
    replies: Mutex<VecDeque<Result<String, ProviderError>>>,
    calls: AtomicUsize,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedProvider {
    pub fn new<I>(replies: I) -> Self
    where
        I: IntoIterator<Item = Result<String, ProviderError>>,
    {
        ScriptedProvider {
            replies: Mutex::new(replies.into_iter().collect()),
            calls: AtomicUsize::new(0),
            prompts: Mutex::new(Vec::new()),
        }
    }

    pub fn bodies<I, S>(bodies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(bodies.into_iter().map(|b| Ok(b.into())))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Every prompt received so far.
    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().expect("prompt log poisoned").clone()
    }
}

impl Provider for ScriptedProvider {
    fn name(&self) -> &str {
        "scripted"
    }

    fn send(&self, prompt: &str, _config: &ModelConfig) -> Result<ProviderReply, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts
            .lock()
            .expect("prompt log poisoned")
            .push(prompt.to_string());
        let next = self
            .replies
            .lock()
            .expect("reply queue poisoned")
            .pop_front()
            .unwrap_or_else(|| Err(ProviderError::Fatal("script exhausted".into())));
        next.map(|body| ProviderReply {
            body,
            usage: Usage::default(),
        })
    }

    fn rate_limited(&self) -> bool {
        false
    }
}

/// Answers from a recorded audit log, keyed by prompt hash.
#[derive(Debug, Default)]
pub struct ReplayProvider {
    responses: HashMap<String, String>,
}

impl ReplayProvider {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        #[derive(Deserialize)]
        struct Entry {
            prompt_hash: String,
            body: Option<String>,
        }
        let mut responses = HashMap::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if let Ok(Entry {
                prompt_hash,
                body: Some(body),
            }) = serde_json::from_str::<Entry>(&line)
            {
                // the latest successful reply for a prompt wins
                responses.insert(prompt_hash, body);
            }
        }
        Ok(ReplayProvider { responses })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl Provider for ReplayProvider {
    fn name(&self) -> &str {
        "replay"
    }

    fn send(&self, prompt: &str, _config: &ModelConfig) -> Result<ProviderReply, ProviderError> {
        let hash = crate::sha256_hex(prompt);
        self.responses
            .get(&hash)
            .map(|body| ProviderReply {
                body: body.clone(),
                usage: Usage::default(),
            })
            .ok_or_else(|| ProviderError::Fatal(format!("no recorded response for prompt {hash}")))
    }

    fn rate_limited(&self) -> bool {
        false
    }
}
