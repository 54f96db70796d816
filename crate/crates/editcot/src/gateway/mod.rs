//! Uniform generation and classification interface.
//!
//! The pipeline never talks to a model except through [`LlmBackend`]. Two
//! implementations ship: [`RemoteBackend`] speaks the de-facto
//! chat-completions HTTP protocol, and [`ScriptedBackend`] replays canned
//! responses for deterministic tests and offline runs.

mod remote;
mod scripted;

pub use remote::{RemoteBackend, RemoteConfig, RetryPolicy};
pub use scripted::{Matcher, ScriptEntry, ScriptHandle, ScriptResponse, ScriptedBackend};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint returned status {status}: {body}")]
    Endpoint { status: u16, body: String },
    #[error("scripted backend has no matcher for request: {0}")]
    ScriptMiss(String),
    #[error("endpoint did not return token log-probabilities: {0}")]
    LogprobsUnavailable(String),
    #[error("invalid classification labels: {0}")]
    LabelCollision(String),
    #[error("api key environment variable {0} is not set")]
    MissingApiKey(String),
    #[error("malformed endpoint response: {0}")]
    InvalidResponse(String),
    #[error("message sequence is empty")]
    EmptyMessages,
}

/// Chat role of one message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

/// One chat message; content is preserved byte-exact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message { role: Role::System, content: content.into() }
    }
    pub fn user(content: impl Into<String>) -> Self {
        Message { role: Role::User, content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        Message { role: Role::Assistant, content: content.into() }
    }
}

/// Ordered chat transcript sent to a backend.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MessageSequence(pub Vec<Message>);

impl MessageSequence {
    pub fn new(messages: Vec<Message>) -> Self {
        MessageSequence(messages)
    }

    pub fn messages(&self) -> &[Message] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn last_content(&self) -> Option<&str> {
        self.0.last().map(|m| m.content.as_str())
    }

    /// Full transcript as one string, used by script matchers and error
    /// context.
    pub fn flattened(&self) -> String {
        let mut out = String::new();
        for m in &self.0 {
            out.push_str(m.role.as_str());
            out.push_str(": ");
            out.push_str(&m.content);
            out.push('\n');
        }
        out
    }
}

/// Decoding controls for one generation call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub stop_sequences: Vec<String>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams { temperature: 0.0, max_tokens: 512, stop_sequences: Vec::new() }
    }
}

impl DecodeParams {
    /// Defaults for chain-of-thought generation.
    pub fn for_cot() -> Self {
        DecodeParams::default()
    }

    /// Defaults for short answers.
    pub fn for_answer() -> Self {
        DecodeParams { max_tokens: 64, ..DecodeParams::default() }
    }
}

/// Probability mass assigned to each candidate label at the first generated
/// position.
///
/// `raw` keeps the mass exactly as reported (it need not sum to 1; mass on
/// other tokens is dropped); `normalized` rescales over the candidate set.
/// `argmax` ties break to the earlier label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistribution {
    pub labels: Vec<String>,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub argmax: usize,
}

impl LabelDistribution {
    pub fn from_raw(labels: Vec<String>, raw: Vec<f64>) -> Self {
        debug_assert_eq!(labels.len(), raw.len());
        let sum: f64 = raw.iter().sum();
        let normalized = if sum > 0.0 {
            raw.iter().map(|p| p / sum).collect()
        } else {
            vec![0.0; raw.len()]
        };
        let mut argmax = 0;
        for (i, p) in raw.iter().enumerate() {
            if *p > raw[argmax] {
                argmax = i;
            }
        }
        LabelDistribution { labels, raw, normalized, argmax }
    }

    pub fn top_label(&self) -> &str {
        &self.labels[self.argmax]
    }

    pub fn raw_prob(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.raw[i])
    }
}

/// Reject label sets whose members could share a first token. Without access
/// to the backend's tokenizer the portable check is: labels distinct, no
/// label a prefix of another, first characters pairwise distinct.
pub fn validate_labels(labels: &[&str]) -> Result<(), GatewayError> {
    if labels.is_empty() {
        return Err(GatewayError::LabelCollision("label set is empty".into()));
    }
    for (i, a) in labels.iter().enumerate() {
        if a.is_empty() {
            return Err(GatewayError::LabelCollision("empty label".into()));
        }
        for b in labels.iter().skip(i + 1) {
            if a == b {
                return Err(GatewayError::LabelCollision(format!("duplicate label {a:?}")));
            }
            if a.starts_with(*b) || b.starts_with(*a) {
                return Err(GatewayError::LabelCollision(format!(
                    "{a:?} and {b:?} share a prefix"
                )));
            }
            if a.chars().next() == b.chars().next() {
                return Err(GatewayError::LabelCollision(format!(
                    "{a:?} and {b:?} share a first character"
                )));
            }
        }
    }
    Ok(())
}

/// Truncate `text` before the earliest occurrence of any stop sequence.
pub fn apply_stop(text: &str, stop_sequences: &[String]) -> String {
    let mut cut = text.len();
    for stop in stop_sequences {
        if stop.is_empty() {
            continue;
        }
        if let Some(pos) = text.find(stop.as_str()) {
            cut = cut.min(pos);
        }
    }
    text[..cut].to_string()
}

/// A model endpoint: text completion plus first-token label classification.
///
/// Implementations must be shareable across concurrent pipeline runs.
pub trait LlmBackend: Send + Sync {
    fn complete(
        &self,
        messages: &MessageSequence,
        params: &DecodeParams,
    ) -> Result<String, GatewayError>;

    /// Probability mass of each label's first token at the first generated
    /// position.
    fn classify(
        &self,
        messages: &MessageSequence,
        labels: &[&str],
    ) -> Result<LabelDistribution, GatewayError>;

    /// Short identifier used in error context.
    fn name(&self) -> &str;
}
