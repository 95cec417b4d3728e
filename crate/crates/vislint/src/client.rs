//! Chat-completions client for vision-language endpoints, plus a
//! deterministic scripted backend for tests and offline runs.
//!
//! The wire protocol is the OpenAI-style chat-completions JSON shape
//! (`POST {endpoint}/chat/completions`), which all common inference servers
//! speak. Images travel as base64 data URLs inside the flagged user message.
//! Both the live client and the scripted backend implement [`ChatBackend`]
//! and are freely interchangeable anywhere a backend is needed.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::catalog::QuestionId;

/// Environment variable consulted for the API key.
pub const API_KEY_ENV: &str = "VISLINT_API_KEY";

#[derive(Debug, Error)]
pub enum ClientError {
    /// Transport or server failure that survived the retry budget.
    #[error("backend error: {0}")]
    Backend(String),
    /// The server answered but the body was not a chat completion.
    #[error("protocol error: {0}")]
    Protocol(String),
    /// HTTP 401/403; never retried.
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("invalid image payload: {0}")]
    InvalidImage(String),
    #[error("failed to read image {path}: {source}")]
    ImageIo {
        path: String,
        source: std::io::Error,
    },
}

/// Text-generation mode requested from the server.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeMode {
    /// Let the server use its configured decoder; no sampling fields are sent.
    #[default]
    ServerDefault,
    /// Request sampling by sending the temperature field.
    Sampling,
}

/// Connection settings for one model endpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout: Duration,
    pub max_retries: u32,
    pub decode_mode: DecodeMode,
}

impl ModelConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> ModelConfig {
        ModelConfig {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            api_key: None,
            temperature: 0.0,
            max_tokens: 512,
            timeout: Duration::from_secs(60),
            max_retries: 2,
            decode_mode: DecodeMode::ServerDefault,
        }
    }

    pub fn validate(&self) -> Result<(), ClientError> {
        let url = reqwest::Url::parse(&self.endpoint_url)
            .map_err(|e| ClientError::Config(format!("endpoint_url: {e}")))?;
        if !url.has_host() {
            return Err(ClientError::Config("endpoint_url must be absolute".into()));
        }
        if self.max_retries > 5 {
            return Err(ClientError::Config(format!(
                "max_retries must be <= 5, got {}",
                self.max_retries
            )));
        }
        if self.temperature < 0.0 {
            return Err(ClientError::Config("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(ClientError::Config("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// Image media types accepted on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaType {
    Png,
    Jpeg,
}

impl MediaType {
    fn mime(self) -> &'static str {
        match self {
            MediaType::Png => "image/png",
            MediaType::Jpeg => "image/jpeg",
        }
    }
}

const PNG_MAGIC: [u8; 8] = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];
const JPEG_MAGIC: [u8; 3] = [0xff, 0xd8, 0xff];

fn sniff(bytes: &[u8]) -> Option<MediaType> {
    if bytes.starts_with(&PNG_MAGIC) {
        Some(MediaType::Png)
    } else if bytes.starts_with(&JPEG_MAGIC) {
        Some(MediaType::Jpeg)
    } else {
        None
    }
}

/// Raw image bytes with a media type consistent with their magic bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePayload {
    bytes: Vec<u8>,
    media_type: MediaType,
}

impl ImagePayload {
    /// Wrap bytes under a declared media type, checking the magic bytes.
    pub fn new(bytes: Vec<u8>, media_type: MediaType) -> Result<ImagePayload, ClientError> {
        if bytes.is_empty() {
            return Err(ClientError::InvalidImage("empty payload".into()));
        }
        match sniff(&bytes) {
            Some(t) if t == media_type => Ok(ImagePayload { bytes, media_type }),
            Some(t) => Err(ClientError::InvalidImage(format!(
                "declared {media_type:?} but magic bytes say {t:?}"
            ))),
            None => Err(ClientError::InvalidImage(
                "bytes are neither PNG nor JPEG".into(),
            )),
        }
    }

    /// Detect the media type from the magic bytes.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<ImagePayload, ClientError> {
        if bytes.is_empty() {
            return Err(ClientError::InvalidImage("empty payload".into()));
        }
        let media_type = sniff(&bytes)
            .ok_or_else(|| ClientError::InvalidImage("bytes are neither PNG nor JPEG".into()))?;
        Ok(ImagePayload { bytes, media_type })
    }

    pub fn from_path(path: &Path) -> Result<ImagePayload, ClientError> {
        let bytes = std::fs::read(path).map_err(|source| ClientError::ImageIo {
            path: path.display().to_string(),
            source,
        })?;
        ImagePayload::from_bytes(bytes)
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn media_type(&self) -> MediaType {
        self.media_type
    }
}

/// Encode an image as a `data:image/...;base64,...` URL.
pub fn encode_image(image: &ImagePayload) -> String {
    format!(
        "data:{};base64,{}",
        image.media_type.mime(),
        base64::engine::general_purpose::STANDARD.encode(&image.bytes)
    )
}

/// Conversation roles on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// One resolved conversation message, ready to send.
#[derive(Debug, Clone)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    pub image: Option<Arc<ImagePayload>>,
}

/// Which model turn a completion request belongs to.
///
/// The live client ignores this; the scripted backend keys its canned replies
/// on it. `question_id` is `None` for turns that belong to no single question
/// (the introductory turns of the grouped strategy).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TurnContext<'a> {
    pub image_id: &'a str,
    pub question_id: Option<QuestionId>,
    pub turn_index: usize,
}

/// A chat backend: given the conversation so far, produce the next assistant
/// reply. Implementations must be shareable across concurrent conversations.
pub trait ChatBackend: Send + Sync {
    fn complete(
        &self,
        messages: &[ChatMessage],
        ctx: &TurnContext<'_>,
    ) -> Result<String, ClientError>;

    /// Whether image payloads must be materialized for this backend. The
    /// scripted backend answers from its table and never looks at pixels.
    fn needs_images(&self) -> bool {
        true
    }
}

/// Live chat-completions client.
pub struct HttpChatClient {
    config: ModelConfig,
    http: reqwest::blocking::Client,
    backoff_base: Duration,
}

impl HttpChatClient {
    pub fn new(config: ModelConfig) -> Result<HttpChatClient, ClientError> {
        config.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ClientError::Config(e.to_string()))?;
        Ok(HttpChatClient {
            config,
            http,
            backoff_base: Duration::from_millis(250),
        })
    }

    /// Override the retry backoff base (tests use a near-zero value).
    pub fn with_backoff_base(mut self, base: Duration) -> HttpChatClient {
        self.backoff_base = base;
        self
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// The JSON request body for a conversation. Identical inputs produce
    /// identical bodies.
    pub fn request_body(&self, messages: &[ChatMessage]) -> Value {
        let wire_messages: Vec<Value> = messages
            .iter()
            .map(|m| {
                let mut content = vec![json!({"type": "text", "text": m.text})];
                if let Some(image) = &m.image {
                    content.push(json!({
                        "type": "image_url",
                        "image_url": {"url": encode_image(image)},
                    }));
                }
                json!({"role": m.role.as_str(), "content": content})
            })
            .collect();
        let mut body = json!({
            "model": self.config.model_name,
            "messages": wire_messages,
            "max_tokens": self.config.max_tokens,
        });
        if self.config.decode_mode == DecodeMode::Sampling {
            body["temperature"] = json!(self.config.temperature);
        }
        body
    }

    fn url(&self) -> String {
        format!(
            "{}/chat/completions",
            self.config.endpoint_url.trim_end_matches('/')
        )
    }

    fn send_once(&self, body: &Value) -> Result<String, Attempt> {
        let mut req = self.http.post(self.url()).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| Attempt::Retry(format!("transport: {e}")))?;
        let status = resp.status();
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(Attempt::Fatal(ClientError::Auth(status.as_u16())));
        }
        if status.is_server_error() {
            return Err(Attempt::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(ClientError::Backend(format!(
                "HTTP {status}"
            ))));
        }
        let value: Value = resp
            .json()
            .map_err(|e| Attempt::Fatal(ClientError::Protocol(format!("bad JSON body: {e}"))))?;
        let content = value
            .get("choices")
            .and_then(|c| c.get(0))
            .and_then(|c| c.get("message"))
            .and_then(|m| m.get("content"))
            .and_then(|c| c.as_str());
        match content {
            Some(text) => Ok(text.to_string()),
            None => Err(Attempt::Fatal(ClientError::Protocol(
                "response missing choices[0].message.content".into(),
            ))),
        }
    }

    /// Send one completion request, retrying transport and 5xx failures with
    /// exponential backoff up to `max_retries` times.
    ///
    /// The conversation is read-only; nothing about it is mutated or reordered.
    pub fn complete(&self, messages: &[ChatMessage]) -> Result<String, ClientError> {
        let body = self.request_body(messages);
        let mut attempt = 0u32;
        loop {
            match self.send_once(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(reason)) => {
                    if attempt >= self.config.max_retries {
                        return Err(ClientError::Backend(format!(
                            "{reason} (after {} attempts)",
                            attempt + 1
                        )));
                    }
                    std::thread::sleep(self.backoff_base * 2u32.pow(attempt));
                    attempt += 1;
                }
            }
        }
    }
}

enum Attempt {
    Retry(String),
    Fatal(ClientError),
}

impl ChatBackend for HttpChatClient {
    fn complete(
        &self,
        messages: &[ChatMessage],
        _ctx: &TurnContext<'_>,
    ) -> Result<String, ClientError> {
        HttpChatClient::complete(self, messages)
    }
}

type ScriptMap = BTreeMap<(String, Option<QuestionId>, usize), String>;

/// Deterministic test backend: replies come from a lookup table keyed by
/// (image id, question id, model turn index), with a default for everything
/// else. Lookups are total and never fail.
pub struct ScriptedBackend {
    script: ScriptMap,
    default_reply: String,
    calls: AtomicUsize,
}

/// On-disk form of a scripted backend (`--mock <script.json>`).
#[derive(Debug, Serialize, Deserialize)]
pub struct ScriptFile {
    #[serde(default)]
    pub default_reply: String,
    #[serde(default)]
    pub entries: Vec<ScriptEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub image_id: String,
    pub question_id: Option<QuestionId>,
    #[serde(default)]
    pub turn_index: usize,
    pub reply: String,
}

impl ScriptedBackend {
    pub fn new(default_reply: impl Into<String>) -> ScriptedBackend {
        ScriptedBackend {
            script: BTreeMap::new(),
            default_reply: default_reply.into(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn insert(
        &mut self,
        image_id: impl Into<String>,
        question_id: Option<QuestionId>,
        turn_index: usize,
        reply: impl Into<String>,
    ) {
        self.script
            .insert((image_id.into(), question_id, turn_index), reply.into());
    }

    pub fn from_script_file(file: ScriptFile) -> ScriptedBackend {
        let mut backend = ScriptedBackend::new(file.default_reply);
        for e in file.entries {
            backend.insert(e.image_id, e.question_id, e.turn_index, e.reply);
        }
        backend
    }

    pub fn load(path: &Path) -> Result<ScriptedBackend, ClientError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ClientError::Config(format!("cannot read mock script {}: {e}", path.display()))
        })?;
        let file: ScriptFile = serde_json::from_str(&text)
            .map_err(|e| ClientError::Config(format!("bad mock script: {e}")))?;
        Ok(ScriptedBackend::from_script_file(file))
    }

    /// The scripted reply for a key, or the default.
    pub fn reply_for(
        &self,
        image_id: &str,
        question_id: Option<QuestionId>,
        turn_index: usize,
    ) -> &str {
        self.script
            .get(&(image_id.to_string(), question_id, turn_index))
            .map(String::as_str)
            .unwrap_or(&self.default_reply)
    }

    /// Number of completions served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(
        &self,
        _messages: &[ChatMessage],
        ctx: &TurnContext<'_>,
    ) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(self
            .reply_for(ctx.image_id, ctx.question_id, ctx.turn_index)
            .to_string())
    }

    fn needs_images(&self) -> bool {
        false
    }
}
