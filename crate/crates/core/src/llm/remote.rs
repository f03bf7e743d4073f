use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::{BackendConfig, ChatMessage, ChatRequest, ChatResponse, LlmBackend, LlmError, TokenUsage};

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    #[serde(default)]
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

/// Counting semaphore bounding in-flight requests.
struct Admission {
    limit: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Admission);

impl Admission {
    fn new(limit: usize) -> Self {
        Self { limit: limit.max(1), in_flight: Mutex::new(0), freed: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

/// Chat-completions HTTP client.
pub struct RemoteBackend {
    cfg: BackendConfig,
    endpoint: String,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    admission: Admission,
}

enum Attempt {
    Done(ChatResponse),
    Transient(LlmError),
    Fatal(LlmError),
}

impl RemoteBackend {
    pub fn new(cfg: BackendConfig, api_key: Option<String>) -> Result<Self, LlmError> {
        let endpoint = cfg
            .endpoint_url
            .clone()
            .ok_or_else(|| LlmError::Config("remote backend requires endpoint_url".into()))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(cfg.timeout())
            .build()
            .map_err(|e| LlmError::Config(format!("building http client: {e}")))?;
        let admission = Admission::new(cfg.max_concurrent_requests);
        Ok(Self { cfg, endpoint, api_key, http, admission })
    }

    fn attempt(&self, req: &ChatRequest) -> Attempt {
        let body = WireRequest {
            model: &self.cfg.model_name,
            messages: &req.messages,
            temperature: req.temperature,
            max_tokens: req.max_tokens,
        };
        let started = Instant::now();
        let mut builder = self.http.post(&self.endpoint).json(&body);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let resp = match builder.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Attempt::Transient(LlmError::Timeout),
            Err(e) => return Attempt::Transient(LlmError::Transport(e.to_string())),
        };
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Attempt::Transient(LlmError::HttpStatus(status.as_u16()));
        }
        if !status.is_success() {
            return Attempt::Fatal(LlmError::HttpStatus(status.as_u16()));
        }
        let bytes = match resp.bytes() {
            Ok(b) => b,
            Err(e) if e.is_timeout() => return Attempt::Transient(LlmError::Timeout),
            Err(e) => return Attempt::Transient(LlmError::Transport(e.to_string())),
        };
        let parsed: WireResponse = match serde_json::from_slice(&bytes) {
            Ok(p) => p,
            Err(e) => return Attempt::Fatal(LlmError::MalformedResponseBody(e.to_string())),
        };
        let Some(text) = parsed.choices.into_iter().next().and_then(|c| c.message.content) else {
            return Attempt::Fatal(LlmError::MalformedResponseBody("no choices[0].message.content".into()));
        };
        let usage = parsed
            .usage
            .map(|u| TokenUsage { prompt_tokens: u.prompt_tokens, completion_tokens: u.completion_tokens })
            .unwrap_or_default();
        Attempt::Done(ChatResponse { text, usage, latency_ms: started.elapsed().as_millis() as u64 })
    }
}

impl LlmBackend for RemoteBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        req.validate()?;
        let _permit = self.admission.acquire();
        let mut attempt = 0u32;
        loop {
            match self.attempt(req) {
                Attempt::Done(r) => return Ok(r),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Transient(e) => {
                    if attempt >= self.cfg.max_retries {
                        if self.cfg.max_retries == 0 {
                            return Err(e);
                        }
                        return Err(LlmError::RetriesExhausted { attempts: attempt + 1, last: e.to_string() });
                    }
                    let backoff = self.cfg.backoff_base_ms.saturating_mul(1u64 << attempt.min(16));
                    warn!(tag = %req.tag, attempt, error = %e, backoff_ms = backoff, "transient backend failure");
                    thread::sleep(Duration::from_millis(backoff));
                    attempt += 1;
                    debug!(tag = %req.tag, attempt, "retrying");
                }
            }
        }
    }
}
