//! Deterministic scripted backend for tests and offline runs.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};

use serde::Deserialize;

use super::{
    apply_stop, validate_labels, DecodeParams, GatewayError, LabelDistribution, LlmBackend,
    MessageSequence,
};

/// Predicate over a request transcript.
pub enum Matcher {
    /// Every listed substring occurs somewhere in the flattened transcript.
    Contains(Vec<String>),
    /// The last message's content contains the substring.
    LastContains(String),
    /// The last message's content equals the string exactly. Reliable for
    /// dispatching on a template's final assistant cue.
    LastEquals(String),
    /// Arbitrary predicate.
    Predicate(Box<dyn Fn(&MessageSequence) -> bool + Send + Sync>),
    /// Matches every request; useful as a catch-all fallback.
    Any,
}

impl Matcher {
    pub fn contains(needle: impl Into<String>) -> Self {
        Matcher::Contains(vec![needle.into()])
    }

    pub fn contains_all<I: IntoIterator<Item = S>, S: Into<String>>(needles: I) -> Self {
        Matcher::Contains(needles.into_iter().map(Into::into).collect())
    }

    fn matches(&self, messages: &MessageSequence) -> bool {
        match self {
            Matcher::Contains(needles) => {
                let text = messages.flattened();
                needles.iter().all(|n| text.contains(n.as_str()))
            }
            Matcher::LastContains(needle) => messages
                .last_content()
                .is_some_and(|c| c.contains(needle.as_str())),
            Matcher::LastEquals(text) => messages.last_content() == Some(text.as_str()),
            Matcher::Predicate(f) => f(messages),
            Matcher::Any => true,
        }
    }
}

impl std::fmt::Debug for Matcher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Matcher::Contains(n) => write!(f, "Contains({n:?})"),
            Matcher::LastContains(n) => write!(f, "LastContains({n:?})"),
            Matcher::LastEquals(n) => write!(f, "LastEquals({n:?})"),
            Matcher::Predicate(_) => write!(f, "Predicate(..)"),
            Matcher::Any => write!(f, "Any"),
        }
    }
}

/// Canned reply: generation text or a label-probability table.
#[derive(Debug, Clone)]
pub enum ScriptResponse {
    Text(String),
    Labels(Vec<(String, f64)>),
}

/// One registered (matcher, response) pair.
#[derive(Debug)]
pub struct ScriptEntry {
    matcher: Matcher,
    response: ScriptResponse,
    fires: Arc<AtomicUsize>,
}

/// Handle onto a registered matcher; reports how often it fired.
#[derive(Debug, Clone)]
pub struct ScriptHandle {
    fires: Arc<AtomicUsize>,
}

impl ScriptHandle {
    pub fn fire_count(&self) -> usize {
        self.fires.load(Ordering::SeqCst)
    }

    pub fn fired(&self) -> bool {
        self.fire_count() > 0
    }
}

/// On-disk script entry. `when_contains` may be one substring or a list that
/// must all occur in the flattened transcript.
#[derive(Debug, Deserialize)]
struct ScriptFileEntry {
    when_contains: serde_json::Value,
    #[serde(default)]
    respond_text: Option<String>,
    #[serde(default)]
    respond_labels: Option<Vec<(String, f64)>>,
}

/// A backend that replays canned responses. Matchers are evaluated in
/// registration order; the first match wins. A request no matcher covers is
/// a hard [`GatewayError::ScriptMiss`], never an empty reply.
#[derive(Default)]
pub struct ScriptedBackend {
    name: String,
    entries: RwLock<Vec<ScriptEntry>>,
}

impl ScriptedBackend {
    pub fn new(name: impl Into<String>) -> Self {
        ScriptedBackend { name: name.into(), entries: RwLock::new(Vec::new()) }
    }

    /// Register a canned generation; returns a handle reporting fire counts.
    pub fn register_text(
        &self,
        matcher: Matcher,
        text: impl Into<String>,
    ) -> ScriptHandle {
        self.register(matcher, ScriptResponse::Text(text.into()))
    }

    /// Register a label-probability table for classification requests.
    pub fn register_labels<I: IntoIterator<Item = (S, f64)>, S: Into<String>>(
        &self,
        matcher: Matcher,
        table: I,
    ) -> ScriptHandle {
        self.register(
            matcher,
            ScriptResponse::Labels(table.into_iter().map(|(l, p)| (l.into(), p)).collect()),
        )
    }

    pub fn register(&self, matcher: Matcher, response: ScriptResponse) -> ScriptHandle {
        let fires = Arc::new(AtomicUsize::new(0));
        self.entries.write().unwrap().push(ScriptEntry {
            matcher,
            response,
            fires: fires.clone(),
        });
        ScriptHandle { fires }
    }

    /// Load a script from its JSON file format: an array of
    /// `{"when_contains": .., "respond_text" | "respond_labels": ..}` objects.
    pub fn from_json(name: impl Into<String>, json: &str) -> Result<Self, GatewayError> {
        let entries: Vec<ScriptFileEntry> = serde_json::from_str(json)
            .map_err(|e| GatewayError::InvalidResponse(format!("bad script file: {e}")))?;
        let backend = ScriptedBackend::new(name);
        for entry in entries {
            let needles = match &entry.when_contains {
                serde_json::Value::String(s) => vec![s.clone()],
                serde_json::Value::Array(items) => items
                    .iter()
                    .map(|v| {
                        v.as_str().map(str::to_owned).ok_or_else(|| {
                            GatewayError::InvalidResponse(
                                "when_contains entries must be strings".into(),
                            )
                        })
                    })
                    .collect::<Result<_, _>>()?,
                _ => {
                    return Err(GatewayError::InvalidResponse(
                        "when_contains must be a string or array of strings".into(),
                    ))
                }
            };
            let response = match (entry.respond_text, entry.respond_labels) {
                (Some(t), None) => ScriptResponse::Text(t),
                (None, Some(l)) => ScriptResponse::Labels(l),
                _ => {
                    return Err(GatewayError::InvalidResponse(
                        "each script entry needs exactly one of respond_text / respond_labels"
                            .into(),
                    ))
                }
            };
            backend.register(Matcher::Contains(needles), response);
        }
        Ok(backend)
    }

    fn find(&self, messages: &MessageSequence) -> Option<(ScriptResponse, Arc<AtomicUsize>)> {
        let entries = self.entries.read().unwrap();
        for entry in entries.iter() {
            if entry.matcher.matches(messages) {
                return Some((entry.response.clone(), entry.fires.clone()));
            }
        }
        None
    }

    fn miss(&self, messages: &MessageSequence) -> GatewayError {
        let text = messages.flattened();
        let tail: String = text.chars().rev().take(160).collect::<Vec<_>>().into_iter().rev().collect();
        GatewayError::ScriptMiss(format!("backend {:?}, request tail: ...{}", self.name, tail))
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(
        &self,
        messages: &MessageSequence,
        params: &DecodeParams,
    ) -> Result<String, GatewayError> {
        if messages.is_empty() {
            return Err(GatewayError::EmptyMessages);
        }
        match self.find(messages) {
            Some((ScriptResponse::Text(text), fires)) => {
                fires.fetch_add(1, Ordering::SeqCst);
                Ok(apply_stop(&text, &params.stop_sequences))
            }
            Some((ScriptResponse::Labels(_), _)) => Err(GatewayError::ScriptMiss(format!(
                "backend {:?}: matcher matched a complete() call but is registered with a label table",
                self.name
            ))),
            None => Err(self.miss(messages)),
        }
    }

    fn classify(
        &self,
        messages: &MessageSequence,
        labels: &[&str],
    ) -> Result<LabelDistribution, GatewayError> {
        if messages.is_empty() {
            return Err(GatewayError::EmptyMessages);
        }
        validate_labels(labels)?;
        match self.find(messages) {
            Some((ScriptResponse::Labels(table), fires)) => {
                fires.fetch_add(1, Ordering::SeqCst);
                let raw: Vec<f64> = labels
                    .iter()
                    .map(|l| {
                        table
                            .iter()
                            .find(|(name, _)| name == l)
                            .map(|(_, p)| *p)
                            .unwrap_or(0.0)
                    })
                    .collect();
                if raw.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(GatewayError::InvalidResponse(format!(
                        "scripted label probabilities out of [0,1]: {raw:?}"
                    )));
                }
                Ok(LabelDistribution::from_raw(
                    labels.iter().map(|l| l.to_string()).collect(),
                    raw,
                ))
            }
            Some((ScriptResponse::Text(_), _)) => Err(GatewayError::ScriptMiss(format!(
                "backend {:?}: matcher matched a classify() call but is registered with text",
                self.name
            ))),
            None => Err(self.miss(messages)),
        }
    }

    fn name(&self) -> &str {
        &self.name
    }
}
