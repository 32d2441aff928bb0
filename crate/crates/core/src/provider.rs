//! Answer-generation backends and the local model interface.
//!
//! Two traits split the trust boundary:
//!
//! * [`LocalModel`] is for the on-premises model that may see raw contract
//!   text (query analysis, metadata extraction, surrogate generation).
//! * [`AnswerProvider`] receives only a [`GenerationRequest`], which can be
//!   built solely from a leak-certified [`AnonymizedPayload`]. The cloud
//!   endpoint implements this trait and nothing else.
//!
//! Both HTTP endpoints speak the OpenAI-compatible chat-completion format.

use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anonymizer::AnonymizedPayload;
use crate::query::QueryType;
use crate::retrieval::{bm25_scores, Bm25Params};
use crate::text::word_tokens;

pub const ANSWER_SYSTEM_PROMPT: &str = include_str!("../assets/answer_prompt.v1.txt");
pub const DEFAULT_TEMPERATURE: f64 = 0.7;
pub const DEFAULT_MAX_TOKENS: u32 = 512;
pub const DEFAULT_MAX_RETRIES: u32 = 3;

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("provider {0} is not configured")]
    NotConfigured(ProviderTag),
    #[error("request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("http status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("authentication rejected (status {0})")]
    Auth(u16),
    #[error("malformed provider response: {0}")]
    InvalidResponse(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: Box<ProviderError> },
    #[error("payload certificate does not match its contents")]
    Uncertified,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl ProviderError {
    pub fn is_retriable(&self) -> bool {
        match self {
            ProviderError::Timeout | ProviderError::Transport(_) => true,
            ProviderError::Http { status, .. } => *status == 408 || *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderTag {
    Mock,
    Local,
    Cloud,
}

impl fmt::Display for ProviderTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderTag::Mock => "mock",
            ProviderTag::Local => "local",
            ProviderTag::Cloud => "cloud",
        })
    }
}

impl std::str::FromStr for ProviderTag {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(ProviderTag::Mock),
            "local" => Ok(ProviderTag::Local),
            "cloud" => Ok(ProviderTag::Cloud),
            other => Err(format!("unknown provider {other:?} (expected mock, local or cloud)")),
        }
    }
}

/// One anonymized excerpt as handed to a provider.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ContextExcerpt {
    pub doc_ref: String,
    pub text: String,
}

/// A prompt ready for an answer provider. Only obtainable from a certified
/// payload, so every field is already free of original entity surfaces.
#[derive(Debug, Clone, Serialize)]
pub struct GenerationRequest {
    system_prompt: String,
    user_prompt: String,
    question: String,
    context: Vec<ContextExcerpt>,
    query_type: QueryType,
    temperature: f64,
    max_tokens: u32,
    provider_tag: ProviderTag,
}

impl GenerationRequest {
    /// Renders the answer prompt from a payload, refusing payloads whose
    /// contents no longer match their leak certificate.
    pub fn from_payload(
        payload: &AnonymizedPayload,
        query_type: QueryType,
        provider_tag: ProviderTag,
    ) -> Result<Self, ProviderError> {
        if !payload.is_certified() {
            return Err(ProviderError::Uncertified);
        }
        let context: Vec<ContextExcerpt> = payload
            .chunks()
            .iter()
            .map(|c| ContextExcerpt { doc_ref: c.doc_ref.clone(), text: c.text.clone() })
            .collect();
        let mut user_prompt = format!("Question: {}\n\nExcerpts:\n", payload.query_text());
        for c in &context {
            user_prompt.push_str(&format!("\n[{}] {}\n", c.doc_ref, c.text));
        }
        Ok(Self {
            system_prompt: ANSWER_SYSTEM_PROMPT.to_string(),
            user_prompt,
            question: payload.query_text().to_string(),
            context,
            query_type,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            provider_tag,
        })
    }

    pub fn with_temperature(mut self, temperature: f64) -> Result<Self, ProviderError> {
        if temperature.is_nan() || temperature < 0.0 {
            return Err(ProviderError::InvalidRequest(format!("temperature {temperature} < 0")));
        }
        self.temperature = temperature;
        Ok(self)
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }

    pub fn system_prompt(&self) -> &str {
        &self.system_prompt
    }
    pub fn user_prompt(&self) -> &str {
        &self.user_prompt
    }
    pub fn question(&self) -> &str {
        &self.question
    }
    pub fn context(&self) -> &[ContextExcerpt] {
        &self.context
    }
    pub fn query_type(&self) -> QueryType {
        self.query_type
    }
    pub fn temperature(&self) -> f64 {
        self.temperature
    }
    pub fn max_tokens(&self) -> u32 {
        self.max_tokens
    }
    pub fn provider_tag(&self) -> ProviderTag {
        self.provider_tag
    }
}

/// Backend that turns an anonymized prompt into an anonymized answer.
pub trait AnswerProvider: Send + Sync {
    fn tag(&self) -> ProviderTag;
    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError>;
}

/// Trusted on-premises model used before anonymization.
pub trait LocalModel: Send + Sync {
    fn complete(&self, system: &str, user: &str) -> Result<String, ProviderError>;
}

impl<T: LocalModel + ?Sized> LocalModel for Arc<T> {
    fn complete(&self, system: &str, user: &str) -> Result<String, ProviderError> {
        (**self).complete(system, user)
    }
}

impl<T: AnswerProvider + ?Sized> AnswerProvider for Arc<T> {
    fn tag(&self) -> ProviderTag {
        (**self).tag()
    }
    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        (**self).generate(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MockStrategy {
    /// Best-matching sentence(s) from the context, quoted verbatim.
    #[default]
    Extractive,
    /// The question followed by every excerpt, verbatim.
    Echo,
}

/// Deterministic offline provider.
#[derive(Debug, Clone, Default)]
pub struct MockProvider {
    pub strategy: MockStrategy,
}

/// Sentences merged into a summarization answer.
const SUMMARY_SENTENCES: usize = 3;

impl MockProvider {
    pub fn echo() -> Self {
        Self { strategy: MockStrategy::Echo }
    }

    fn extract(&self, request: &GenerationRequest) -> String {
        let sentences: Vec<&str> = request.context().iter().flat_map(|c| split_sentences(&c.text)).collect();
        if sentences.is_empty() {
            return "The provided excerpts do not contain the answer.".to_string();
        }
        let tokens: Vec<Vec<String>> = sentences.iter().map(|s| word_tokens(s)).collect();
        let query = word_tokens(request.question());
        let scores = bm25_scores(&query, &tokens, Bm25Params::default());
        let mut order: Vec<usize> = (0..sentences.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let take = match request.query_type() {
            QueryType::Summarization => SUMMARY_SENTENCES,
            _ => 1,
        };
        let mut picked: Vec<usize> = order.into_iter().take(take).collect();
        picked.sort_unstable();
        picked.iter().map(|&i| sentences[i]).collect::<Vec<_>>().join(" ")
    }
}

impl AnswerProvider for MockProvider {
    fn tag(&self) -> ProviderTag {
        ProviderTag::Mock
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        Ok(match self.strategy {
            MockStrategy::Echo => {
                let mut out = request.question().to_string();
                for c in request.context() {
                    out.push_str("\n\n");
                    out.push_str(&c.text);
                }
                out
            }
            MockStrategy::Extractive => self.extract(request),
        })
    }
}

const ABBREVIATIONS: &[&str] = &[
    "inc", "corp", "co", "ltd", "llc", "mr", "mrs", "ms", "dr", "no", "st", "jr", "sr", "vs", "u.s", "n.a", "s.a", "e.g", "i.e",
];

/// Splits prose into sentences at `.`, `!` or `?` followed by whitespace,
/// skipping common abbreviations. Returned slices are trimmed.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (i, &(pos, c)) in chars.iter().enumerate() {
        if !matches!(c, '.' | '!' | '?') {
            continue;
        }
        let next_ws = chars.get(i + 1).is_none_or(|&(_, n)| n.is_whitespace());
        if !next_ws {
            continue;
        }
        if c == '.' {
            let word: String = text[start..pos]
                .rsplit(|ch: char| ch.is_whitespace() || ch == '(')
                .next()
                .unwrap_or("")
                .to_lowercase();
            if ABBREVIATIONS.contains(&word.as_str()) {
                continue;
            }
        }
        let end = pos + c.len_utf8();
        let s = text[start..end].trim();
        if !s.is_empty() {
            out.push(s);
        }
        start = end;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Connection settings for an OpenAI-compatible endpoint.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Base URL up to (not including) `/chat/completions`, e.g.
    /// `http://localhost:8000/v1`.
    pub base_url: String,
    pub api_key: Option<String>,
    pub model: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
}

impl fmt::Debug for EndpointConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EndpointConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model", &self.model)
            .field("timeout_secs", &self.timeout_secs)
            .field("max_retries", &self.max_retries)
            .field("backoff_base_ms", &self.backoff_base_ms)
            .finish()
    }
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            model: model.into(),
            timeout_secs: 60,
            max_retries: DEFAULT_MAX_RETRIES,
            backoff_base_ms: 500,
        }
    }

    /// Reads `{PREFIX}_URL`, `{PREFIX}_API_KEY`, `{PREFIX}_MODEL` and
    /// `{PREFIX}_TIMEOUT_SECS`. Returns `None` when the URL is unset.
    pub fn from_env(prefix: &str) -> Option<Self> {
        let var = |name: &str| std::env::var(format!("{prefix}_{name}")).ok().filter(|v| !v.is_empty());
        let mut cfg = Self::new(var("URL")?, var("MODEL").unwrap_or_else(|| "default".into()));
        cfg.api_key = var("API_KEY");
        if let Some(t) = var("TIMEOUT_SECS").and_then(|t| t.parse().ok()) {
            cfg.timeout_secs = t;
        }
        Some(cfg)
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: Option<String>,
}

/// Blocking chat-completion client with bounded exponential-backoff retries.
pub struct ChatClient {
    config: EndpointConfig,
    http: OnceLock<reqwest::blocking::Client>,
}

impl fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChatClient").field("config", &self.config).finish()
    }
}

impl ChatClient {
    pub fn new(config: EndpointConfig) -> Self {
        Self { config, http: OnceLock::new() }
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn http(&self) -> Result<&reqwest::blocking::Client, ProviderError> {
        if let Some(c) = self.http.get() {
            return Ok(c);
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(self.config.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(self.http.get_or_init(|| client))
    }

    fn attempt(&self, body: &ChatRequest<'_>) -> Result<String, ProviderError> {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let mut req = self.http()?.post(url).json(body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Transport(e.to_string())
            }
        })?;
        let status = resp.status().as_u16();
        if status == 401 || status == 403 {
            return Err(ProviderError::Auth(status));
        }
        if !(200..300).contains(&status) {
            let body = resp.text().unwrap_or_default();
            return Err(ProviderError::Http { status, body });
        }
        let parsed: ChatResponse = resp.json().map_err(|e| ProviderError::InvalidResponse(e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| ProviderError::InvalidResponse("no choices in response".into()))
    }

    /// Sends one chat completion, retrying retriable failures up to
    /// `max_retries` times.
    pub fn complete(&self, system: &str, user: &str, temperature: f64, max_tokens: u32) -> Result<String, ProviderError> {
        let body = ChatRequest {
            model: &self.config.model,
            messages: vec![ChatMessage { role: "system", content: system }, ChatMessage { role: "user", content: user }],
            temperature,
            max_tokens,
        };
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retriable() && attempt < self.config.max_retries => {
                    let wait = self.config.backoff_base_ms.saturating_mul(1 << attempt);
                    tracing::debug!(attempt, wait_ms = wait, error = %e, "retrying chat completion");
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                Err(e) if e.is_retriable() => {
                    return Err(ProviderError::RetriesExhausted { attempts: attempt + 1, last: Box::new(e) })
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// On-premises endpoint: usable both as the trusted local model and as an
/// answer provider.
#[derive(Debug)]
pub struct LocalEndpoint {
    client: ChatClient,
}

impl LocalEndpoint {
    pub fn new(config: EndpointConfig) -> Self {
        Self { client: ChatClient::new(config) }
    }
}

impl LocalModel for LocalEndpoint {
    fn complete(&self, system: &str, user: &str) -> Result<String, ProviderError> {
        self.client.complete(system, user, 0.0, DEFAULT_MAX_TOKENS)
    }
}

impl AnswerProvider for LocalEndpoint {
    fn tag(&self) -> ProviderTag {
        ProviderTag::Local
    }
    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        self.client
            .complete(request.system_prompt(), request.user_prompt(), request.temperature(), request.max_tokens())
    }
}

/// Third-party endpoint. Deliberately does not implement [`LocalModel`].
#[derive(Debug)]
pub struct CloudEndpoint {
    client: ChatClient,
}

impl CloudEndpoint {
    pub fn new(config: EndpointConfig) -> Self {
        Self { client: ChatClient::new(config) }
    }
}

impl AnswerProvider for CloudEndpoint {
    fn tag(&self) -> ProviderTag {
        ProviderTag::Cloud
    }
    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        self.client
            .complete(request.system_prompt(), request.user_prompt(), request.temperature(), request.max_tokens())
    }
}

/// Wraps a provider and records every prompt it was given.
#[derive(Debug, Clone)]
pub struct RecordingProvider<P> {
    inner: P,
    log: Arc<Mutex<Vec<String>>>,
}

impl<P> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, log: Arc::default() }
    }

    /// Shares an existing log, so several wrappers feed one audit trail.
    pub fn with_log(inner: P, log: Arc<Mutex<Vec<String>>>) -> Self {
        Self { inner, log }
    }

    pub fn log(&self) -> Arc<Mutex<Vec<String>>> {
        Arc::clone(&self.log)
    }

    pub fn recorded(&self) -> Vec<String> {
        self.log.lock().expect("recording log poisoned").clone()
    }
}

impl<P: AnswerProvider> AnswerProvider for RecordingProvider<P> {
    fn tag(&self) -> ProviderTag {
        self.inner.tag()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, ProviderError> {
        self.log
            .lock()
            .expect("recording log poisoned")
            .push(format!("{}\n{}", request.system_prompt(), request.user_prompt()));
        self.inner.generate(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentence_splitting_respects_abbreviations() {
        let s = "Orion Inc. shall pay. The term is five years! Is it? yes";
        assert_eq!(split_sentences(s), vec!["Orion Inc. shall pay.", "The term is five years!", "Is it?", "yes"]);
    }

    #[test]
    fn retriable_classification() {
        assert!(ProviderError::Timeout.is_retriable());
        assert!(ProviderError::Http { status: 503, body: String::new() }.is_retriable());
        assert!(ProviderError::Http { status: 429, body: String::new() }.is_retriable());
        assert!(!ProviderError::Http { status: 400, body: String::new() }.is_retriable());
        assert!(!ProviderError::Auth(401).is_retriable());
    }

    #[test]
    fn provider_tags_parse() {
        assert_eq!("cloud".parse::<ProviderTag>().unwrap(), ProviderTag::Cloud);
        assert!("gpt".parse::<ProviderTag>().is_err());
    }

    #[test]
    fn endpoint_debug_redacts_key() {
        let mut cfg = EndpointConfig::new("http://x", "m");
        cfg.api_key = Some("sk-secret".into());
        assert!(!format!("{cfg:?}").contains("sk-secret"));
    }
}
