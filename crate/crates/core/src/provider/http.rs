//! JSON-over-HTTP backend for chat-completions style endpoints.
//!
//! Endpoints, relative to `base_url`:
//!
//! * `POST chat/completions`: `{model, temperature, max_tokens, messages}`;
//!   images travel as base64 `data:` URLs inside `image_url` content parts.
//! * `POST audio/transcriptions`: `{model, audio_b64, mime}` → `{text}`.
//! * `POST audio/speech`: `{model, input, voice, response_format: "wav"}` →
//!   raw WAV bytes.

use std::fmt;
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde_json::{json, Value};
use tracing::warn;

use super::{wav, ChatRequest, Provider, ProviderConfig, ProviderError, SpeechClip};

struct ApiKey(String);

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey(<redacted>)")
    }
}

#[derive(Debug)]
pub struct HttpProvider {
    client: Client,
    base_url: String,
    key: ApiKey,
    chat_model: String,
    stt_model: String,
    tts_model: String,
    max_attempts: u32,
    backoff_ms: u64,
    voices: Vec<String>,
}

impl HttpProvider {
    /// Reads the API key from the environment variable named in `config`.
    pub fn new(config: &ProviderConfig) -> Result<Self, ProviderError> {
        let base_url = config
            .base_url
            .clone()
            .ok_or_else(|| ProviderError::Config("http backend requires base_url".into()))?;
        let env = config
            .api_key_env
            .as_deref()
            .ok_or_else(|| ProviderError::Config("http backend requires api_key_env".into()))?;
        let key = std::env::var(env)
            .map_err(|_| ProviderError::Config(format!("environment variable {env} is not set")))?;
        let client = Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| ProviderError::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            base_url: base_url.trim_end_matches('/').to_string(),
            key: ApiKey(key),
            chat_model: config.chat_model.clone(),
            stt_model: config.stt_model.clone(),
            tts_model: config.tts_model.clone(),
            max_attempts: config.retry.max_attempts.max(1),
            backoff_ms: config.retry.backoff_ms,
            voices: config.voices.clone(),
        })
    }

    pub fn chat_payload(&self, request: &ChatRequest) -> Value {
        chat_payload(&self.chat_model, request)
    }

    fn redact(&self, text: &str) -> String {
        if self.key.0.is_empty() {
            text.to_string()
        } else {
            text.replace(&self.key.0, "[redacted]")
        }
    }

    /// Sends with retry on transport failures, timeouts, 429 and 5xx.
    fn post(&self, path: &str, body: &Value) -> Result<Response, ProviderError> {
        let url = format!("{}/{}", self.base_url, path);
        let mut last = String::new();
        for attempt in 1..=self.max_attempts {
            if attempt > 1 {
                let factor = 1u64 << (attempt - 2).min(16);
                thread::sleep(Duration::from_millis(self.backoff_ms.saturating_mul(factor)));
            }
            let sent = self.client.post(&url).bearer_auth(&self.key.0).json(body).send();
            match sent {
                Ok(resp) if resp.status().is_success() => return Ok(resp),
                Ok(resp) => {
                    let status = resp.status();
                    let snippet: String = resp.text().unwrap_or_default().chars().take(200).collect();
                    let message = self.redact(&format!("{status}: {snippet}"));
                    if is_transient_status(status) {
                        warn!(attempt, %status, "provider returned a transient error");
                        last = message;
                    } else {
                        return Err(ProviderError::Rejected(message));
                    }
                }
                Err(err) => {
                    let message = self.redact(&err.without_url().to_string());
                    warn!(attempt, error = %message, "provider transport failure");
                    last = message;
                }
            }
        }
        Err(ProviderError::Exhausted {
            attempts: self.max_attempts,
            last,
        })
    }
}

fn is_transient_status(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS
        || status == StatusCode::REQUEST_TIMEOUT
        || status.is_server_error()
}

pub fn chat_payload(model: &str, request: &ChatRequest) -> Value {
    let mut messages = vec![json!({"role": "system", "content": request.system_prompt})];
    for m in &request.messages {
        let content = match &m.image {
            None => json!(m.text),
            Some(image) => json!([
                {"type": "text", "text": m.text},
                {"type": "image_url", "image_url": {
                    "url": format!("data:{};base64,{}", sniff_image_mime(image), BASE64.encode(image))
                }}
            ]),
        };
        messages.push(json!({"role": m.role.as_str(), "content": content}));
    }
    json!({
        "model": model,
        "temperature": request.temperature,
        "max_tokens": request.max_reply_tokens,
        "messages": messages,
    })
}

/// Extracts `choices[0].message.content` from a completion response.
pub fn parse_chat_response(body: &Value) -> Result<String, ProviderError> {
    let content = &body["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(ProviderError::Rejected(
            "completion response has no message content".into(),
        )),
    }
}

fn sniff_image_mime(bytes: &[u8]) -> &'static str {
    if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        "image/png"
    } else if bytes.starts_with(&[0xFF, 0xD8]) {
        "image/jpeg"
    } else if bytes.starts_with(b"GIF8") {
        "image/gif"
    } else if bytes.len() > 12 && &bytes[8..12] == b"WEBP" {
        "image/webp"
    } else {
        "application/octet-stream"
    }
}

impl Provider for HttpProvider {
    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        request.validate()?;
        let resp = self.post("chat/completions", &self.chat_payload(request))?;
        let body: Value = resp
            .json()
            .map_err(|e| ProviderError::Rejected(format!("malformed completion body: {e}")))?;
        parse_chat_response(&body)
    }

    fn transcribe(&self, audio: &[u8], mime: &str) -> Result<String, ProviderError> {
        if audio.is_empty() {
            return Err(ProviderError::InvalidRequest("audio is empty".into()));
        }
        let body = json!({
            "model": self.stt_model,
            "audio_b64": BASE64.encode(audio),
            "mime": mime,
        });
        let resp = self.post("audio/transcriptions", &body)?;
        let body: Value = resp
            .json()
            .map_err(|e| ProviderError::Rejected(format!("malformed transcription body: {e}")))?;
        body["text"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Rejected("transcription response has no text".into()))
    }

    fn synthesize(&self, text: &str, voice_id: &str) -> Result<SpeechClip, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("nothing to synthesize".into()));
        }
        if !self.voices.iter().any(|v| v == voice_id) {
            return Err(ProviderError::UnknownVoice(voice_id.to_string()));
        }
        let body = json!({
            "model": self.tts_model,
            "input": text,
            "voice": voice_id,
            "response_format": "wav",
        });
        let resp = self.post("audio/speech", &body)?;
        let bytes = resp
            .bytes()
            .map_err(|e| ProviderError::Transient(e.without_url().to_string()))?
            .to_vec();
        let duration_ms = wav::duration_ms(&bytes)
            .ok_or_else(|| ProviderError::Undecodable("speech response is not a WAV file".into()))?;
        Ok(SpeechClip {
            bytes,
            mime: "audio/wav".into(),
            duration_ms,
            voice_id: voice_id.to_string(),
        })
    }

    fn voices(&self) -> Vec<String> {
        self.voices.clone()
    }
}
