//! Chat/vision completion, speech-to-text and text-to-speech behind one
//! trait, with an HTTP backend and a seeded offline stub.

mod http;
mod stub;
pub mod wav;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{chat_payload, parse_chat_response, HttpProvider};
pub use stub::StubProvider;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    Assistant,
    User,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::Assistant => "assistant",
            Role::User => "user",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptMessage {
    pub role: Role,
    pub text: String,
    pub image: Option<Vec<u8>>,
}

impl PromptMessage {
    pub fn new(role: Role, text: impl Into<String>) -> Self {
        Self {
            role,
            text: text.into(),
            image: None,
        }
    }

    pub fn with_image(mut self, image: Vec<u8>) -> Self {
        self.image = Some(image);
        self
    }
}

/// What a completion is for. Backends that talk to a real model ignore it;
/// the stub uses it to pick a deterministic output shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Purpose {
    #[default]
    Reply,
    Summarize,
    Notes,
    Profile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub system_prompt: String,
    pub messages: Vec<PromptMessage>,
    pub temperature: f64,
    pub max_reply_tokens: u32,
    pub purpose: Purpose,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(ProviderError::InvalidRequest(
                "request needs at least one user message".into(),
            ));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::InvalidRequest(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        Ok(())
    }

    pub fn last_user(&self) -> Option<&PromptMessage> {
        self.messages.iter().rev().find(|m| m.role == Role::User)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct SpeechClip {
    pub bytes: Vec<u8>,
    pub mime: String,
    pub duration_ms: u64,
    pub voice_id: String,
}

impl fmt::Debug for SpeechClip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpeechClip")
            .field("bytes", &self.bytes.len())
            .field("mime", &self.mime)
            .field("duration_ms", &self.duration_ms)
            .field("voice_id", &self.voice_id)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    /// Timeout, transport failure or a server-side fault; worth retrying.
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("provider rejected the request: {0}")]
    Rejected(String),
    #[error("provider failed after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("unknown voice `{0}`")]
    UnknownVoice(String),
    #[error("audio could not be decoded: {0}")]
    Undecodable(String),
    #[error("provider misconfigured: {0}")]
    Config(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transient(_))
    }
}

pub trait Provider: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError>;

    fn transcribe(&self, audio: &[u8], mime: &str) -> Result<String, ProviderError>;

    fn synthesize(&self, text: &str, voice_id: &str) -> Result<SpeechClip, ProviderError>;

    fn voices(&self) -> Vec<String>;
}

pub type SharedProvider = Arc<dyn Provider>;

/// Voices offered by the default speech backend.
pub const DEFAULT_VOICES: [&str; 6] = ["alloy", "echo", "fable", "onyx", "nova", "shimmer"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Http,
    #[default]
    Stub,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub backend: Backend,
    pub base_url: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub chat_model: String,
    pub stt_model: String,
    pub tts_model: String,
    pub temperature: f64,
    pub max_reply_tokens: u32,
    pub timeout_ms: u64,
    pub retry: RetryConfig,
    pub max_in_flight: usize,
    /// Stub seed; falls back to the session seed when absent.
    pub seed: Option<u64>,
    pub voices: Vec<String>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Stub,
            base_url: None,
            api_key_env: None,
            chat_model: "gpt-4-vision-preview".into(),
            stt_model: "whisper-1".into(),
            tts_model: "tts-1".into(),
            temperature: 0.9,
            max_reply_tokens: 300,
            timeout_ms: 30_000,
            retry: RetryConfig::default(),
            max_in_flight: 4,
            seed: None,
            voices: DEFAULT_VOICES.iter().map(|v| v.to_string()).collect(),
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ProviderError::Config("temperature must lie in [0, 2]".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(ProviderError::Config(
                "retry.max_attempts must be at least 1".into(),
            ));
        }
        if self.max_in_flight == 0 {
            return Err(ProviderError::Config("max_in_flight must be at least 1".into()));
        }
        if self.voices.is_empty() {
            return Err(ProviderError::Config("voice list is empty".into()));
        }
        if self.backend == Backend::Http {
            if self.base_url.as_deref().is_none_or(|u| u.trim().is_empty()) {
                return Err(ProviderError::Config("http backend requires base_url".into()));
            }
            if self.api_key_env.as_deref().is_none_or(|k| k.trim().is_empty()) {
                return Err(ProviderError::Config("http backend requires api_key_env".into()));
            }
        }
        Ok(())
    }

    /// Builds the configured backend. `session_seed` seeds the stub when no
    /// explicit provider seed is set.
    pub fn build(&self, session_seed: u64) -> Result<SharedProvider, ProviderError> {
        self.validate()?;
        Ok(match self.backend {
            Backend::Stub => Arc::new(StubProvider::new(
                self.seed.unwrap_or(session_seed),
                self.voices.clone(),
            )),
            Backend::Http => Arc::new(HttpProvider::new(self)?),
        })
    }
}
