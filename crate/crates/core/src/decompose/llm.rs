//! Chat-completion backed decomposition with retries, fallback and caching.

use std::sync::{Condvar, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::cache::{cache_key, hex, DecomposeCache};
use super::{rule_split, Backend, DecomposeError, QueryTriple};

/// System prompt sent with every request. Its digest is part of the cache
/// key, so editing it invalidates cached decompositions.
pub const PROMPT: &str = include_str!("prompt.txt");

/// SHA-256 of [`PROMPT`], hex encoded.
pub fn prompt_digest() -> &'static str {
    static DIGEST: OnceLock<String> = OnceLock::new();
    DIGEST.get_or_init(|| hex(&Sha256::digest(PROMPT.as_bytes())))
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("request failed: {0}")]
    Request(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("response has no message content: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    pub fn decomposition(model: &str, query: &str) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![
                ChatMessage {
                    role: "system".into(),
                    content: PROMPT.to_string(),
                },
                ChatMessage {
                    role: "user".into(),
                    content: format!("Query: {}", query.trim()),
                },
            ],
            temperature: 0.0,
        }
    }
}

/// Anything that can answer a chat-completion request with message text.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;
}

/// OpenAI-compatible `POST {base_url}/chat/completions`.
pub struct HttpChatTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpChatTransport {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            url: format!("{}/chat/completions", base_url.trim_end_matches('/')),
            api_key,
        }
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: ChatMessage,
}

impl ChatTransport for HttpChatTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(request)
            .map_err(|e| TransportError::Request(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| TransportError::Request(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Status { status, body });
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&body).map_err(|e| TransportError::Malformed(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| TransportError::Malformed("empty choices".into()))
    }
}

/// Extract the `Q_a:` / `Q_b:` lines. Labels are case-insensitive and may be
/// wrapped in list or emphasis markers.
pub fn parse_labeled_pair(text: &str) -> Option<(String, String)> {
    let mut a = None;
    let mut b = None;
    for line in text.lines() {
        let line = line.trim().trim_start_matches(['-', '*', '#', ' ']);
        let Some((label, rest)) = line.split_once(':') else {
            continue;
        };
        let label = label.trim().trim_matches('*').to_ascii_lowercase();
        let value = rest.trim().trim_matches('*').trim().to_string();
        match label.as_str() {
            "q_a" | "qa" if a.is_none() => a = Some(value),
            "q_b" | "qb" if b.is_none() => b = Some(value),
            _ => {}
        }
    }
    match (a, b) {
        (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() && a != b => Some((a, b)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub model: String,
    /// Extra attempts after an unparseable response.
    pub retries: u32,
    pub max_in_flight: usize,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            model: "qwen2.5-3b-instruct".into(),
            retries: 2,
            max_in_flight: 4,
        }
    }
}

struct Gate {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            slots: Mutex::new(n.max(1)),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut slots = self.slots.lock().unwrap();
        while *slots == 0 {
            slots = self.freed.wait(slots).unwrap();
        }
        *slots -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.slots.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

pub struct LlmDecomposer {
    transport: Box<dyn ChatTransport>,
    settings: LlmSettings,
    cache: DecomposeCache,
    gate: Gate,
}

impl LlmDecomposer {
    pub fn new(
        transport: Box<dyn ChatTransport>,
        settings: LlmSettings,
        cache: DecomposeCache,
    ) -> Self {
        let gate = Gate::new(settings.max_in_flight);
        Self {
            transport,
            settings,
            cache,
            gate,
        }
    }

    pub fn settings(&self) -> &LlmSettings {
        &self.settings
    }

    /// Cache lookup, then up to `1 + retries` endpoint calls. Unparseable
    /// output after the last attempt falls back to the delimiter splitter
    /// (not cached). Transport failures are returned as errors.
    pub fn decompose(&self, query: &str) -> Result<QueryTriple, DecomposeError> {
        if query.trim().is_empty() {
            return Err(DecomposeError::EmptyQuery);
        }
        let key = cache_key(Backend::Llm, &self.settings.model, prompt_digest(), query);
        if let Some(hit) = self.cache.get(&key) {
            return Ok(hit);
        }
        let request = ChatRequest::decomposition(&self.settings.model, query);
        for attempt in 0..=self.settings.retries {
            let text = {
                let _slot = self.gate.acquire();
                self.transport.complete(&request)?
            };
            if let Some((sub_a, sub_b)) = parse_labeled_pair(&text) {
                let triple = QueryTriple {
                    original: query.trim().to_string(),
                    sub_a,
                    sub_b,
                    backend: Backend::Llm,
                };
                self.cache.put(&key, &triple)?;
                return Ok(triple);
            }
            log::debug!(
                "unparseable decomposition (attempt {}): {text:?}",
                attempt + 1
            );
        }
        log::warn!("falling back to delimiter split for {query:?}");
        rule_split(query)
    }
}
