//! Chat-completion backends.
//!
//! Every language-model call in the simulator goes through [`LlmBackend`].
//! Three implementations ship with the crate:
//!
//! - [`MockBackend`]: seeded and deterministic; its replies are a pure
//!   function of `(seed, request tag, message hash)`.
//! - [`RemoteBackend`]: a chat-completions HTTP client with retries,
//!   exponential backoff and an admission limit on in-flight requests.
//! - [`ReplayBackend`]: serves responses recorded in an event log.
//!
//! [`FnBackend`] wraps a closure and is handy for scripted tests.

mod mock;
mod recorder;
mod remote;
mod replay;
mod structured;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use mock::MockBackend;
pub use recorder::Recorder;
pub use remote::RemoteBackend;
pub use replay::ReplayBackend;
pub use structured::{
    complete_structured, tagged_line, AgentChoice, IntegerInRange, RuleDraft, RulePair, Schema, SurveyChoice,
    SurveyPick, YesNo,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("request timed out")]
    Timeout,
    #[error("http status {0}")]
    HttpStatus(u16),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("malformed response body: {0}")]
    MalformedResponseBody(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend config error: {0}")]
    Config(String),
    #[error("reply could not be parsed as {schema} after one reprompt")]
    ParseFailedTwice { schema: &'static str, reply: String },
    #[error("no recorded response for {tag} request {hash}")]
    ReplayMissing { tag: RequestTag, hash: String },
    /// An error replayed verbatim from a recorded run.
    #[error("{0}")]
    Recorded(String),
    #[error("{0}")]
    Scripted(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RequestTag {
    NarrativeGen,
    Judge,
    Reflection,
    ConversationTurn,
    InviteDecision,
    Survey,
    RuleProposal,
    RuleComment,
    ImpressionUpdate,
    SelfPerceptionUpdate,
    Summarize,
    IdeologyJudge,
}

impl fmt::Display for RequestTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub tag: RequestTag,
}

impl ChatRequest {
    pub fn new(tag: RequestTag, messages: Vec<ChatMessage>, params: &SamplingParams) -> Self {
        Self { messages, temperature: params.temperature, max_tokens: params.max_tokens, tag }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::Config("request has no messages".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(LlmError::Config(format!("invalid temperature {}", self.temperature)));
        }
        if self.max_tokens == 0 {
            return Err(LlmError::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 over the tag and the role-tagged messages.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.tag.to_string().as_bytes());
        for m in &self.messages {
            h.update([0u8]);
            h.update(match m.role {
                Role::System => b"s",
                Role::User => b"u",
                Role::Assistant => b"a",
            });
            h.update([0u8]);
            h.update(m.content.as_bytes());
        }
        let digest = h.finalize();
        digest[..16].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Concatenated content of all user messages.
    pub fn user_text(&self) -> String {
        self.messages
            .iter()
            .filter(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn system_text(&self) -> &str {
        self.messages
            .iter()
            .find(|m| m.role == Role::System)
            .map(|m| m.content.as_str())
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub usage: TokenUsage,
    pub latency_ms: u64,
}

/// A chat-completion backend. Implementations are shared between threads.
pub trait LlmBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(req)
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for std::sync::Arc<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(req)
    }
}

/// Backend driven by a closure returning the reply text.
pub struct FnBackend<F>(pub F);

impl<F> LlmBackend for FnBackend<F>
where
    F: Fn(&ChatRequest) -> Result<String, LlmError> + Send + Sync,
{
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let text = (self.0)(req)?;
        Ok(ChatResponse { text, usage: TokenUsage::default(), latency_ms: 0 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendKind {
    Remote,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self { temperature: 0.7, max_tokens: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint_url: Option<String>,
    pub model_name: String,
    /// Name of the environment variable holding the API key. The key itself
    /// is never stored in the config.
    pub api_key_env: Option<String>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub max_concurrent_requests: usize,
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub sampling: SamplingParams,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            endpoint_url: None,
            model_name: "llama-3.1-70b-instruct".into(),
            api_key_env: None,
            timeout_ms: 60_000,
            max_retries: 3,
            backoff_base_ms: 250,
            max_concurrent_requests: 8,
            seed: Some(0),
            sampling: SamplingParams::default(),
        }
    }
}

impl BackendConfig {
    pub fn mock(seed: u64) -> Self {
        Self { kind: BackendKind::Mock, seed: Some(seed), ..Self::default() }
    }

    pub fn remote(endpoint_url: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Remote,
            endpoint_url: Some(endpoint_url.into()),
            seed: None,
            ..Self::default()
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_millis(self.timeout_ms)
    }

    /// Checks the config and resolves the API key from the environment.
    pub fn validate(&self) -> Result<Option<String>, LlmError> {
        match self.kind {
            BackendKind::Mock => {
                if self.seed.is_none() {
                    return Err(LlmError::Config("mock backend requires a seed".into()));
                }
                Ok(None)
            }
            BackendKind::Remote => {
                if self.endpoint_url.as_deref().map_or(true, str::is_empty) {
                    return Err(LlmError::Config("remote backend requires endpoint_url".into()));
                }
                if self.max_concurrent_requests == 0 {
                    return Err(LlmError::Config("max_concurrent_requests must be positive".into()));
                }
                match &self.api_key_env {
                    None => Ok(None),
                    Some(var) => match std::env::var(var) {
                        Ok(key) if !key.is_empty() => Ok(Some(key)),
                        _ => Err(LlmError::Config(format!(
                            "environment variable {var} holding the API key is not set"
                        ))),
                    },
                }
            }
        }
    }
}

/// Builds the backend described by `cfg`.
pub fn connect(cfg: &BackendConfig) -> Result<Box<dyn LlmBackend>, LlmError> {
    let key = cfg.validate()?;
    Ok(match cfg.kind {
        BackendKind::Mock => Box::new(MockBackend::new(cfg.seed.unwrap_or_default())),
        BackendKind::Remote => Box::new(RemoteBackend::new(cfg.clone(), key)?),
    })
}

/// Rough token estimate: whitespace-separated words.
pub fn approx_tokens(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(tag: RequestTag, text: &str) -> ChatRequest {
        ChatRequest::new(tag, vec![ChatMessage::user(text)], &SamplingParams::default())
    }

    #[test]
    fn hash_depends_on_tag_and_content() {
        let a = req(RequestTag::Judge, "hello");
        assert_eq!(a.hash(), req(RequestTag::Judge, "hello").hash());
        assert_ne!(a.hash(), req(RequestTag::Survey, "hello").hash());
        assert_ne!(a.hash(), req(RequestTag::Judge, "hello!").hash());
        assert_eq!(a.hash().len(), 32);
    }

    #[test]
    fn validate_rejects_empty_requests() {
        let mut r = req(RequestTag::Judge, "x");
        r.messages.clear();
        assert!(r.validate().is_err());
    }

    #[test]
    fn config_requirements() {
        let mut mock = BackendConfig::mock(1);
        assert!(mock.validate().is_ok());
        mock.seed = None;
        assert!(mock.validate().is_err());

        let mut remote = BackendConfig::remote("http://127.0.0.1:1/v1/chat/completions");
        assert!(remote.validate().is_ok());
        remote.endpoint_url = None;
        assert!(remote.validate().is_err());

        let mut keyed = BackendConfig::remote("http://127.0.0.1:1");
        keyed.api_key_env = Some("VALUESIM_TEST_SURELY_UNSET_KEY".into());
        assert!(matches!(keyed.validate(), Err(LlmError::Config(_))));
    }
}
