//! Captioner and LLM backends: offline mocks and HTTP clients.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::knowledge;
use super::prompt::{FewShotPrompt, Task};
use super::rules::parse_caption;
use super::similarity::words;
use crate::corpus::{default_classes, knowledge_text_for_class, with_article, KnowledgeMode, ToyClassSpec};
use crate::dsp::wav::{encode_wav, WavFormat};
use crate::dsp::Waveform;
use crate::error::{Error, Result};

pub const ENV_LLM_ENDPOINT: &str = "TEXTSEP_LLM_ENDPOINT";
pub const ENV_LLM_API_KEY: &str = "TEXTSEP_LLM_API_KEY";
pub const ENV_LLM_MODEL: &str = "TEXTSEP_LLM_MODEL";
pub const ENV_CAPTIONER_ENDPOINT: &str = "TEXTSEP_CAPTIONER_ENDPOINT";
pub const ENV_CAPTIONER_API_KEY: &str = "TEXTSEP_CAPTIONER_API_KEY";

/// Text reply used when no source is present.
pub const NO_SOURCES_REPLY: &str = "None.";

pub trait LlmBackend: Send + Sync {
    fn name(&self) -> &str;
    /// Sends the prompt and returns the raw reply text.
    fn complete(&self, prompt: &FewShotPrompt) -> Result<String>;
}

pub trait Captioner: Send + Sync {
    fn name(&self) -> &str;
    fn caption(&self, x: &Waveform) -> Result<String>;
}

// ---------------------------------------------------------------------------
// Offline LLM

fn normalized(text: &str) -> String {
    words(text).join(" ")
}

/// Deterministic stand-in for an instruction-tuned LLM. It answers queries
/// that match one of its shots verbatim, and otherwise applies parsing
/// rules (source task) or curated descriptions (knowledge task).
#[derive(Debug, Clone)]
pub struct MockLlm {
    classes: Vec<ToyClassSpec>,
    clip_seconds: f64,
}

impl Default for MockLlm {
    fn default() -> Self {
        Self::new(default_classes(), 1.0)
    }
}

impl MockLlm {
    pub fn new(classes: Vec<ToyClassSpec>, clip_seconds: f64) -> Self {
        Self { classes, clip_seconds }
    }

    fn toy_class(&self, phrase: &str) -> Option<&ToyClassSpec> {
        let p = normalized(phrase);
        self.classes.iter().find(|c| {
            p == normalized(&c.phrase)
                || p == normalized(&with_article(&c.phrase))
                || p == normalized(&c.class_id)
        })
    }

    fn source_reply(&self, caption: &str) -> String {
        let trimmed = normalized(caption);
        if trimmed.is_empty() || ["silence", "none", "no sound", "nothing"].contains(&trimmed.as_str()) {
            return NO_SOURCES_REPLY.to_string();
        }
        let phrases = parse_caption(caption);
        if phrases.is_empty() {
            return NO_SOURCES_REPLY.to_string();
        }
        phrases.iter().map(|p| format!("{p}.")).collect::<Vec<_>>().join(" ")
    }

    fn knowledge_reply(&self, phrase: &str) -> String {
        if let Some(spec) = self.toy_class(phrase) {
            return knowledge_text_for_class(spec, KnowledgeMode::Enriched, self.clip_seconds);
        }
        knowledge::lookup(phrase)
            .map(str::to_string)
            .unwrap_or_else(|| knowledge::generic(phrase))
    }
}

impl LlmBackend for MockLlm {
    fn name(&self) -> &str {
        "mock-rules"
    }

    fn complete(&self, prompt: &FewShotPrompt) -> Result<String> {
        let q = normalized(&prompt.query);
        if let Some(shot) = prompt.exemplars.iter().find(|e| normalized(&e.input) == q) {
            return Ok(shot.output.clone());
        }
        Ok(match prompt.task {
            Task::SourceParse => self.source_reply(&prompt.query),
            Task::KnowledgeParse => self.knowledge_reply(&prompt.query),
        })
    }
}

// ---------------------------------------------------------------------------
// Offline captioner

/// Identity of a waveform: SHA-256 over the sample rate and the samples as
/// little-endian f32, so a clip survives a float WAV round trip.
pub fn fingerprint(x: &Waveform) -> String {
    let mut h = Sha256::new();
    h.update(x.sample_rate().to_le_bytes());
    for &s in x.samples() {
        h.update((s as f32).to_le_bytes());
    }
    hex::encode(h.finalize())
}

/// Fingerprint → source phrases for clips whose content is known.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRegistry {
    pub entries: BTreeMap<String, Vec<String>>,
}

impl CaptionRegistry {
    pub fn register(&mut self, x: &Waveform, phrases: Vec<String>) {
        self.entries.insert(fingerprint(x), phrases);
    }

    pub fn merge(&mut self, other: CaptionRegistry) {
        self.entries.extend(other.entries);
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// "A x.", "A x and a y.", "A x, a y and a z."
pub fn render_caption(phrases: &[String]) -> String {
    let items: Vec<String> = phrases.iter().map(|p| with_article(p)).collect();
    let body = match items.len() {
        0 => return "Silence.".to_string(),
        1 => items[0].clone(),
        n => format!("{} and {}", items[..n - 1].join(", "), items[n - 1]),
    };
    let mut c = body.chars();
    let first = c.next().map(|f| f.to_uppercase().collect::<String>()).unwrap_or_default();
    format!("{first}{}.", c.as_str())
}

#[derive(Debug, Clone, Default)]
pub struct MockCaptioner {
    pub registry: CaptionRegistry,
}

impl MockCaptioner {
    pub fn new(registry: CaptionRegistry) -> Self {
        Self { registry }
    }
}

impl Captioner for MockCaptioner {
    fn name(&self) -> &str {
        "mock-registry"
    }

    fn caption(&self, x: &Waveform) -> Result<String> {
        let fp = fingerprint(x);
        self.registry
            .entries
            .get(&fp)
            .map(|phrases| render_caption(phrases))
            .ok_or(Error::UnknownClip(fp))
    }
}

// ---------------------------------------------------------------------------
// HTTP

/// Token bucket shared by all calls through one backend.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(requests_per_second: f64, capacity: f64) -> Self {
        let capacity = capacity.max(1.0);
        Self {
            rate: requests_per_second,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Blocks until a token is available. A non-positive rate disables
    /// limiting.
    pub fn acquire(&self) {
        if self.rate <= 0.0 {
            return;
        }
        loop {
            let wait = {
                let mut guard = self.state.lock().expect("token bucket lock");
                let (tokens, last) = &mut *guard;
                let now = Instant::now();
                *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.rate).min(self.capacity);
                *last = now;
                if *tokens >= 1.0 {
                    *tokens -= 1.0;
                    return;
                }
                (1.0 - *tokens) / self.rate
            };
            thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 1000,
            factor: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        Duration::from_secs_f64(self.base_delay_ms as f64 / 1000.0 * self.factor.powi(attempt as i32))
    }
}

enum Attempt {
    Retryable(String),
    Fatal(String),
}

fn classify(err: ureq::Error) -> Attempt {
    match err {
        ureq::Error::Status(code, resp) => {
            let body = resp.into_string().unwrap_or_default();
            let msg = format!("HTTP {code}: {}", body.chars().take(200).collect::<String>());
            if code == 429 || code >= 500 {
                Attempt::Retryable(msg)
            } else {
                Attempt::Fatal(msg)
            }
        }
        ureq::Error::Transport(t) => Attempt::Retryable(t.to_string()),
    }
}

fn with_retries<T>(
    policy: &RetryPolicy,
    bucket: &TokenBucket,
    mut call: impl FnMut() -> std::result::Result<T, ureq::Error>,
) -> Result<T> {
    let mut attempt = 0;
    loop {
        bucket.acquire();
        match call() {
            Ok(v) => return Ok(v),
            Err(e) => match classify(e) {
                Attempt::Fatal(message) => return Err(Error::Backend { message, retries: attempt }),
                Attempt::Retryable(message) => {
                    if attempt >= policy.max_retries {
                        return Err(Error::Backend { message, retries: attempt });
                    }
                    thread::sleep(policy.delay(attempt));
                    attempt += 1;
                }
            },
        }
    }
}

/// Pulls the answer text out of a chat-style JSON reply.
pub fn extract_reply_text(body: &Value) -> Option<String> {
    let candidates = [
        body.pointer("/choices/0/message/content"),
        body.pointer("/choices/0/text"),
        body.pointer("/message/content"),
        body.pointer("/output_text"),
        body.pointer("/caption"),
        body.pointer("/text"),
    ];
    if let Some(s) = candidates.into_iter().flatten().find_map(Value::as_str) {
        return Some(s.to_string());
    }
    body.get("content")?
        .as_array()?
        .iter()
        .find_map(|block| block.get("text").and_then(Value::as_str))
        .map(str::to_string)
}

/// Chat-completion client: one system message, k user/assistant shot
/// pairs, then the query.
#[derive(Debug)]
pub struct HttpChat {
    endpoint: String,
    api_key: String,
    model: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
    bucket: TokenBucket,
}

impl HttpChat {
    pub fn new(endpoint: &str, api_key: &str, model: &str, timeout: Duration, retry: RetryPolicy, requests_per_second: f64) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            api_key: api_key.to_string(),
            model: model.to_string(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            retry,
            bucket: TokenBucket::new(requests_per_second, 1.0),
        }
    }

    pub fn request_body(&self, prompt: &FewShotPrompt) -> Value {
        let mut messages = vec![json!({"role": "system", "content": prompt.instruction})];
        for e in &prompt.exemplars {
            messages.push(json!({"role": "user", "content": e.input}));
            messages.push(json!({"role": "assistant", "content": e.output}));
        }
        messages.push(json!({"role": "user", "content": prompt.query}));
        json!({"model": self.model, "messages": messages, "temperature": 0})
    }
}

impl LlmBackend for HttpChat {
    fn name(&self) -> &str {
        "http-chat"
    }

    fn complete(&self, prompt: &FewShotPrompt) -> Result<String> {
        let body = self.request_body(prompt);
        let reply: Value = with_retries(&self.retry, &self.bucket, || {
            let resp = self
                .agent
                .post(&self.endpoint)
                .set("Authorization", &format!("Bearer {}", self.api_key))
                .send_json(body.clone())?;
            resp.into_json::<Value>().map_err(ureq::Error::from)
        })?;
        extract_reply_text(&reply).ok_or(Error::Parse { raw: reply.to_string() })
    }
}

/// Captioning service client: posts the clip as a WAV body and reads a
/// JSON reply with the caption text.
#[derive(Debug)]
pub struct HttpCaptioner {
    endpoint: String,
    api_key: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
    bucket: TokenBucket,
}

impl HttpCaptioner {
    pub fn new(endpoint: &str, api_key: &str, timeout: Duration, retry: RetryPolicy, requests_per_second: f64) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            api_key: api_key.to_string(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            retry,
            bucket: TokenBucket::new(requests_per_second, 1.0),
        }
    }
}

impl Captioner for HttpCaptioner {
    fn name(&self) -> &str {
        "http-captioner"
    }

    fn caption(&self, x: &Waveform) -> Result<String> {
        let wav = encode_wav(x, WavFormat::Pcm16)?;
        let reply: Value = with_retries(&self.retry, &self.bucket, || {
            let resp = self
                .agent
                .post(&self.endpoint)
                .set("Authorization", &format!("Bearer {}", self.api_key))
                .set("Content-Type", "audio/wav")
                .send_bytes(&wav)?;
            resp.into_json::<Value>().map_err(ureq::Error::from)
        })?;
        extract_reply_text(&reply).ok_or(Error::Parse { raw: reply.to_string() })
    }
}

// ---------------------------------------------------------------------------
// Specs

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LlmKind {
    MockRules,
    HttpChat,
}

/// Backend selection. Credentials never live here; they are read from the
/// environment when an HTTP backend is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmBackendSpec {
    pub kind: LlmKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    pub timeout_secs: f64,
    pub retry: RetryPolicy,
    pub requests_per_second: f64,
}

impl Default for LlmBackendSpec {
    fn default() -> Self {
        Self {
            kind: LlmKind::MockRules,
            endpoint: None,
            model_name: "mock-rules".into(),
            timeout_secs: 30.0,
            retry: RetryPolicy::default(),
            requests_per_second: 0.0,
        }
    }
}

fn env_var(name: &str) -> Option<String> {
    std::env::var(name).ok().filter(|v| !v.is_empty())
}

impl LlmBackendSpec {
    /// Fills endpoint and model from the environment when unset.
    pub fn with_env(mut self) -> Self {
        if self.endpoint.is_none() {
            self.endpoint = env_var(ENV_LLM_ENDPOINT);
        }
        if let Some(model) = env_var(ENV_LLM_MODEL) {
            if self.kind == LlmKind::HttpChat {
                self.model_name = model;
            }
        }
        self
    }

    pub fn build(&self, mock: MockLlm) -> Result<Box<dyn LlmBackend>> {
        match self.kind {
            LlmKind::MockRules => Ok(Box::new(mock)),
            LlmKind::HttpChat => {
                let endpoint = self
                    .endpoint
                    .clone()
                    .or_else(|| env_var(ENV_LLM_ENDPOINT))
                    .ok_or_else(|| Error::invalid(format!("http-chat backend needs an endpoint ({ENV_LLM_ENDPOINT})")))?;
                let key = env_var(ENV_LLM_API_KEY)
                    .ok_or_else(|| Error::invalid(format!("http-chat backend needs {ENV_LLM_API_KEY}")))?;
                Ok(Box::new(HttpChat::new(
                    &endpoint,
                    &key,
                    &self.model_name,
                    Duration::from_secs_f64(self.timeout_secs),
                    self.retry,
                    self.requests_per_second,
                )))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CaptionerKind {
    MockRegistry,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptionerSpec {
    pub kind: CaptionerKind,
    pub endpoint: Option<String>,
    /// Caption registry JSON for the offline captioner.
    pub registry: Option<std::path::PathBuf>,
    pub timeout_secs: f64,
    pub retry: RetryPolicy,
    pub requests_per_second: f64,
}

impl Default for CaptionerSpec {
    fn default() -> Self {
        Self {
            kind: CaptionerKind::MockRegistry,
            endpoint: None,
            registry: None,
            timeout_secs: 60.0,
            retry: RetryPolicy::default(),
            requests_per_second: 0.0,
        }
    }
}

impl CaptionerSpec {
    pub fn build(&self) -> Result<Box<dyn Captioner>> {
        match self.kind {
            CaptionerKind::MockRegistry => {
                let registry = match &self.registry {
                    Some(p) => CaptionRegistry::load(p)?,
                    None => CaptionRegistry::default(),
                };
                Ok(Box::new(MockCaptioner::new(registry)))
            }
            CaptionerKind::Http => {
                let endpoint = self
                    .endpoint
                    .clone()
                    .or_else(|| env_var(ENV_CAPTIONER_ENDPOINT))
                    .ok_or_else(|| Error::invalid(format!("http captioner needs an endpoint ({ENV_CAPTIONER_ENDPOINT})")))?;
                let key = env_var(ENV_CAPTIONER_API_KEY).unwrap_or_default();
                Ok(Box::new(HttpCaptioner::new(
                    &endpoint,
                    &key,
                    Duration::from_secs_f64(self.timeout_secs),
                    self.retry,
                    self.requests_per_second,
                )))
            }
        }
    }
}
