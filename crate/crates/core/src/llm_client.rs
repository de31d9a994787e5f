//! External LLM clients for the judge and the CoT editor.
//!
//! Both flow through the same [`ChatClient`] abstraction: one
//! prompt-in/text-out call. The shipped implementation talks to any
//! OpenAI-compatible chat-completions endpoint with rate limiting, bounded
//! retry with backoff on transient failures, and full request/response
//! logging for audit. Tests use [`scripted::ScriptedClient`].
//!
//! Credentials are only ever read from environment variables, never from
//! config files.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

/// One chat call.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: Option<String>,
    pub user: String,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
}

#[derive(Debug, Error)]
pub enum ClientError {
    /// Network-level failure; retryable.
    #[error("transport failure: {0}")]
    Transport(String),
    /// Service asked us to slow down; retryable.
    #[error("rate limited by provider")]
    RateLimited,
    /// Non-retryable API error.
    #[error("API error {status}: {message}")]
    Api { status: u16, message: String },
    #[error("environment variable {0} is not set (credentials are env-only)")]
    MissingApiKey(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
}

impl ClientError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ClientError::Transport(_) | ClientError::RateLimited)
            || matches!(self, ClientError::Api { status, .. } if *status >= 500)
    }
}

/// Prompt-in/text-out chat model.
pub trait ChatClient: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError>;
    fn model(&self) -> &str;
}

/// Connection settings for an OpenAI-compatible endpoint.
#[derive(Debug, Clone)]
pub struct OpenAiConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    /// Upper bound on request rate; `None` disables client-side limiting.
    pub requests_per_minute: Option<u32>,
    pub max_attempts: u32,
    pub backoff: Duration,
    /// When set, every request/response pair is appended as JSONL.
    pub call_log: Option<PathBuf>,
}

impl OpenAiConfig {
    pub fn new(base_url: &str, model: &str, api_key_env: &str) -> OpenAiConfig {
        OpenAiConfig {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key_env: api_key_env.to_string(),
            requests_per_minute: Some(60),
            max_attempts: 3,
            backoff: Duration::from_millis(500),
            call_log: None,
        }
    }
}

pub struct OpenAiClient {
    cfg: OpenAiConfig,
    api_key: String,
    http: reqwest::blocking::Client,
    last_call: Mutex<Option<Instant>>,
}

impl OpenAiClient {
    pub fn connect(cfg: OpenAiConfig) -> Result<OpenAiClient, ClientError> {
        let api_key = std::env::var(&cfg.api_key_env)
            .map_err(|_| ClientError::MissingApiKey(cfg.api_key_env.clone()))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        Ok(OpenAiClient {
            cfg,
            api_key,
            http,
            last_call: Mutex::new(None),
        })
    }

    fn throttle(&self) {
        let Some(rpm) = self.cfg.requests_per_minute else {
            return;
        };
        let min_interval = Duration::from_secs_f64(60.0 / rpm.max(1) as f64);
        let mut last = self.last_call.lock().expect("rate limiter lock");
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < min_interval {
                std::thread::sleep(min_interval - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn call_once(&self, request: &ChatRequest) -> Result<String, ClientError> {
        self.throttle();
        let mut messages = Vec::new();
        if let Some(system) = &request.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.user}));
        let mut body = json!({
            "model": self.cfg.model,
            "messages": messages,
        });
        if let Some(t) = request.temperature {
            body["temperature"] = json!(t);
        }
        if let Some(m) = request.max_tokens {
            body["max_tokens"] = json!(m);
        }

        let resp = self
            .http
            .post(format!("{}/chat/completions", self.cfg.base_url))
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| ClientError::Transport(e.to_string()))?;

        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if status.as_u16() == 429 {
            return Err(ClientError::RateLimited);
        }
        if !status.is_success() {
            return Err(ClientError::Api {
                status: status.as_u16(),
                message: text,
            });
        }

        let parsed: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ClientError::Malformed(e.to_string()))?;
        parsed["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ClientError::Malformed("missing choices[0].message.content".into()))
    }

    fn log_call(&self, request: &ChatRequest, outcome: &Result<String, ClientError>) {
        let Some(path) = &self.cfg.call_log else {
            return;
        };
        let entry = json!({
            "model": self.cfg.model,
            "request": request,
            "response": match outcome {
                Ok(text) => json!({"ok": text}),
                Err(e) => json!({"error": e.to_string()}),
            },
        });
        if let Ok(mut file) = OpenOptions::new().create(true).append(true).open(path) {
            let _ = writeln!(file, "{entry}");
        }
    }
}

impl ChatClient for OpenAiClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            let outcome = self.call_once(request);
            self.log_call(request, &outcome);
            match outcome {
                Err(e) if e.is_retryable() && attempt < self.cfg.max_attempts => {
                    std::thread::sleep(self.cfg.backoff * attempt);
                }
                other => return other,
            }
        }
    }

    fn model(&self) -> &str {
        &self.cfg.model
    }
}

/// Deterministic scripted client for tests and offline dry runs: returns a
/// queued sequence of outcomes and records every request it saw.
pub mod scripted {
    use std::collections::VecDeque;
    use std::sync::Mutex;

    use super::{ChatClient, ChatRequest, ClientError};

    #[derive(Default)]
    pub struct ScriptedClient {
        queue: Mutex<VecDeque<Result<String, String>>>,
        pub requests: Mutex<Vec<ChatRequest>>,
    }

    impl ScriptedClient {
        pub fn new() -> ScriptedClient {
            ScriptedClient::default()
        }

        pub fn respond(self, text: &str) -> Self {
            self.queue
                .lock()
                .unwrap()
                .push_back(Ok(text.to_string()));
            self
        }

        pub fn fail(self, message: &str) -> Self {
            self.queue
                .lock()
                .unwrap()
                .push_back(Err(message.to_string()));
            self
        }

        pub fn seen(&self) -> usize {
            self.requests.lock().unwrap().len()
        }
    }

    impl ChatClient for ScriptedClient {
        fn complete(&self, request: &ChatRequest) -> Result<String, ClientError> {
            self.requests.lock().unwrap().push(request.clone());
            match self.queue.lock().unwrap().pop_front() {
                Some(Ok(text)) => Ok(text),
                Some(Err(message)) => Err(ClientError::Transport(message)),
                None => Err(ClientError::Transport(
                    "scripted client exhausted".to_string(),
                )),
            }
        }

        fn model(&self) -> &str {
            "scripted"
        }
    }
}
