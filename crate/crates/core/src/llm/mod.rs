//! Chat-completion backends.
//!
//! [`LoggedBackend`] wraps a concrete backend, bounds the number of calls in
//! flight, and appends every call (successful or not) to a transcript.

pub mod live;
pub mod scripted;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;

pub use live::LiveBackend;
pub use scripted::{ScriptEntry, ScriptedBackend};

/// Sampling temperature for the generation actions.
pub const GENERATION_TEMPERATURE: f64 = 1.0;
/// Sampling temperature for the cognition stages.
pub const COGNITION_TEMPERATURE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Action or stage label, e.g. "em1" or "rapid-pair".
    pub tag: String,
}

impl ChatRequest {
    pub fn new(tag: &str, system_text: String, user_text: String, temperature: f64) -> Self {
        Self { system_text, user_text, temperature, max_tokens: 2048, tag: tag.to_string() }
    }

    pub fn digest(&self) -> String {
        sha256_hex(format!("{}\u{0}{}\u{0}{}\u{0}{}", self.tag, self.temperature, self.system_text, self.user_text).as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("request rejected with HTTP {status}: {body}")]
    Rejected { status: u16, body: String },
    #[error("script fixture error: {0}")]
    Fixture(String),
    #[error("backend configuration error: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    Request(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Live,
    Scripted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub endpoint: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry.
    pub backoff_base_s: f64,
    pub max_in_flight: usize,
    pub script_path: Option<PathBuf>,
}

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";
pub const API_BASE_ENV: &str = "COGMCTS_API_BASE";

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Live,
            endpoint: DEFAULT_ENDPOINT.into(),
            model_name: "gpt-4o-mini".into(),
            api_key_env: "COGMCTS_API_KEY".into(),
            timeout_s: 60.0,
            max_retries: 3,
            backoff_base_s: 1.0,
            max_in_flight: 4,
            script_path: None,
        }
    }
}

impl BackendConfig {
    pub fn scripted(path: impl Into<PathBuf>) -> Self {
        Self { kind: BackendKind::Scripted, script_path: Some(path.into()), ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.max_in_flight == 0 {
            return Err(LlmError::Config("max_in_flight must be at least 1".into()));
        }
        match self.kind {
            BackendKind::Live => {
                if self.endpoint.trim().is_empty() || self.model_name.trim().is_empty() {
                    return Err(LlmError::Config("live backend needs endpoint and model_name".into()));
                }
                if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
                    return Err(LlmError::Config("timeout_s must be positive".into()));
                }
            }
            BackendKind::Scripted => {
                if self.script_path.is_none() {
                    return Err(LlmError::Config("scripted backend needs script_path".into()));
                }
            }
        }
        Ok(())
    }
}

/// A chat-completion implementation. Must be callable from several threads.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, req: &ChatRequest) -> Result<String, LlmError>;

    /// Replay position, for backends that have one.
    fn cursor(&self) -> Option<BTreeMap<String, usize>> {
        None
    }

    fn restore_cursor(&self, _cursor: &BTreeMap<String, usize>) -> Result<(), LlmError> {
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub seq: u64,
    pub tag: String,
    pub request_digest: String,
    pub system_text: String,
    pub user_text: String,
    pub response: Option<String>,
    pub error: Option<String>,
    /// Always 0 when latency recording is off, keeping transcripts
    /// byte-stable for replayed runs.
    pub latency_ms: u64,
}

pub struct LoggedBackend {
    inner: Box<dyn ChatBackend>,
    transcript: Mutex<Vec<TranscriptEntry>>,
    record_latency: bool,
    in_flight: Mutex<usize>,
    slot_freed: Condvar,
    max_in_flight: usize,
}

impl LoggedBackend {
    pub fn new(inner: Box<dyn ChatBackend>, max_in_flight: usize, record_latency: bool) -> Self {
        Self {
            inner,
            transcript: Mutex::new(Vec::new()),
            record_latency,
            in_flight: Mutex::new(0),
            slot_freed: Condvar::new(),
            max_in_flight: max_in_flight.max(1),
        }
    }

    pub fn chat(&self, req: &ChatRequest) -> Result<String, LlmError> {
        {
            let mut n = self.in_flight.lock().expect("semaphore poisoned");
            while *n >= self.max_in_flight {
                n = self.slot_freed.wait(n).expect("semaphore poisoned");
            }
            *n += 1;
        }
        let start = Instant::now();
        let outcome = if req.user_text.trim().is_empty() {
            Err(LlmError::Request("empty user text".into()))
        } else {
            self.inner.chat(req)
        };
        let latency_ms = if self.record_latency { start.elapsed().as_millis() as u64 } else { 0 };
        {
            let mut n = self.in_flight.lock().expect("semaphore poisoned");
            *n -= 1;
            self.slot_freed.notify_one();
        }
        let mut log = self.transcript.lock().expect("transcript poisoned");
        let seq = log.len() as u64;
        log.push(TranscriptEntry {
            seq,
            tag: req.tag.clone(),
            request_digest: req.digest(),
            system_text: req.system_text.clone(),
            user_text: req.user_text.clone(),
            response: outcome.as_ref().ok().cloned(),
            error: outcome.as_ref().err().map(|e| e.to_string()),
            latency_ms,
        });
        outcome
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.transcript.lock().expect("transcript poisoned").clone()
    }

    pub fn transcript_len(&self) -> usize {
        self.transcript.lock().expect("transcript poisoned").len()
    }

    /// Replaces the transcript, used when resuming from a checkpoint.
    pub fn restore_transcript(&self, entries: Vec<TranscriptEntry>) {
        *self.transcript.lock().expect("transcript poisoned") = entries;
    }

    pub fn calls_with_tag(&self, tag: &str) -> usize {
        self.transcript.lock().expect("transcript poisoned").iter().filter(|e| e.tag == tag).count()
    }

    pub fn cursor(&self) -> Option<BTreeMap<String, usize>> {
        self.inner.cursor()
    }

    pub fn restore_cursor(&self, cursor: &BTreeMap<String, usize>) -> Result<(), LlmError> {
        self.inner.restore_cursor(cursor)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }
}

/// Builds the configured backend. The live backend reads its API key from
/// the named environment variable and fails here if it is missing.
pub fn build_backend(cfg: &BackendConfig) -> Result<LoggedBackend, LlmError> {
    cfg.validate()?;
    match cfg.kind {
        BackendKind::Scripted => {
            let path = cfg.script_path.as_ref().expect("validated");
            let backend = ScriptedBackend::from_file(path)?;
            Ok(LoggedBackend::new(Box::new(backend), cfg.max_in_flight, false))
        }
        BackendKind::Live => {
            let key = std::env::var(&cfg.api_key_env)
                .ok()
                .filter(|k| !k.trim().is_empty())
                .ok_or_else(|| LlmError::Config(format!("environment variable {} is not set", cfg.api_key_env)))?;
            let endpoint = std::env::var(API_BASE_ENV).ok().filter(|s| !s.trim().is_empty()).unwrap_or_else(|| cfg.endpoint.clone());
            let backend = LiveBackend::new(cfg, endpoint, key);
            Ok(LoggedBackend::new(Box::new(backend), cfg.max_in_flight, true))
        }
    }
}
