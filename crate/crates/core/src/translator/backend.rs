//! Completion backends: the single-call text interface the translator
//! drives, a queue-driven backend for tests and an HTTP client for
//! OpenAI-compatible chat-completion servers.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

pub trait CompletionBackend: Send + Sync {
    fn name(&self) -> &str;
    fn complete(&self, prompt: &str) -> Result<String, BackendError>;
}

/// Replays queued responses in order and counts calls. Once the queue is
/// empty every call fails as unavailable.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    responses: Mutex<VecDeque<Result<String, BackendError>>>,
    prompts: Mutex<Vec<String>>,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let queue = responses.into_iter().map(|s| Ok(s.into())).collect();
        ScriptedBackend {
            responses: Mutex::new(queue),
            ..Default::default()
        }
    }

    pub fn push(&self, response: Result<String, BackendError>) {
        self.responses.lock().unwrap().push_back(response);
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().unwrap().push(prompt.to_string());
        self.responses
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(BackendError::Unavailable("script exhausted".into())))
    }
}

/// Environment variable holding the bearer token for [`RemoteBackend`].
pub const API_KEY_ENV: &str = "CHAT_MODELING_API_KEY";

/// Chat-completions client: temperature 0, one choice, no streaming.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    timeout: Duration,
}

impl RemoteBackend {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

    /// `endpoint` is the full chat-completions URL. The API key is read from
    /// [`API_KEY_ENV`].
    pub fn new(endpoint: &str, model: &str) -> Self {
        RemoteBackend {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            timeout: Self::DEFAULT_TIMEOUT,
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
            "n": 1,
            "stream": false,
        })
    }
}

impl CompletionBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(&self.endpoint).header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(self.request_body(prompt))
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let status = resp.status();
        let body: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| BackendError::Unavailable(format!("unreadable response ({status}): {e}")))?;
        if !status.is_success() {
            let msg = body
                .pointer("/error/message")
                .and_then(Value::as_str)
                .unwrap_or("no error message");
            return Err(BackendError::Unavailable(format!("HTTP {status}: {msg}")));
        }
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Unavailable("response has no choices[0].message.content".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_counts_and_exhausts() {
        let b = ScriptedBackend::new(["a", "b"]);
        assert_eq!(b.complete("p1").unwrap(), "a");
        assert_eq!(b.complete("p2").unwrap(), "b");
        assert!(b.complete("p3").is_err());
        assert_eq!(b.calls(), 3);
        assert_eq!(b.prompts(), vec!["p1", "p2", "p3"]);
    }

    #[test]
    fn request_is_deterministic_chat_completion() {
        let r = RemoteBackend::new("http://localhost:1/v1/chat/completions", "m").with_api_key(None);
        let body = r.request_body("hello");
        assert_eq!(body["temperature"], 0);
        assert_eq!(body["stream"], false);
        assert_eq!(body["messages"][0]["content"], "hello");
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        // port 9 (discard) on localhost is closed in the test environment
        let r = RemoteBackend::new("http://127.0.0.1:9/v1/chat/completions", "m")
            .with_api_key(None)
            .with_timeout(Duration::from_secs(2));
        assert!(matches!(r.complete("x"), Err(BackendError::Unavailable(_))));
    }
}
