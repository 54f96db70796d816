//! Chat-completions HTTP backend.
//!
//! Speaks the de-facto protocol: POST `{endpoint_url}/chat/completions` with
//! `model`, `messages`, `temperature`, `max_tokens`, `stop`, and (for
//! classification) `logprobs`/`top_logprobs`. The API key is read from a
//! named environment variable at request time and sent as a bearer token.

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{
    apply_stop, validate_labels, DecodeParams, GatewayError, LabelDistribution, LlmBackend,
    MessageSequence,
};

/// Retry policy for transport failures and 5xx responses. 4xx is terminal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub attempts: u32,
    /// Delay before the first retry; doubles per retry.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::from_millis(500) }
    }
}

/// Connection settings for one remote endpoint.
#[derive(Debug, Clone)]
pub struct RemoteConfig {
    /// Base URL, e.g. `http://localhost:8000/v1`.
    pub endpoint_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key; `None` sends no
    /// Authorization header.
    pub api_key_env_var: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    /// `top_logprobs` requested for classification calls.
    pub top_logprobs: u8,
}

impl RemoteConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            api_key_env_var: None,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            top_logprobs: 20,
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    name: String,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<TopLogprob>,
}

#[derive(Deserialize)]
struct TopLogprob {
    token: String,
    logprob: f64,
}

/// Strip leading whitespace and byte-level/sentencepiece space markers so
/// endpoint tokens can be prefix-matched against label words.
fn normalize_token(token: &str) -> &str {
    token
        .trim_start_matches([' ', '\t', '\n'])
        .trim_start_matches('\u{0120}') // byte-level BPE space marker
        .trim_start_matches('\u{2581}') // sentencepiece space marker
}

impl RemoteBackend {
    pub fn new(name: impl Into<String>, config: RemoteConfig) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| GatewayError::Transport { attempts: 0, message: e.to_string() })?;
        Ok(RemoteBackend { config, client, name: name.into() })
    }

    fn bearer(&self) -> Result<Option<String>, GatewayError> {
        match &self.config.api_key_env_var {
            None => Ok(None),
            Some(var) => match std::env::var(var) {
                Ok(key) if !key.is_empty() => Ok(Some(key)),
                _ => Err(GatewayError::MissingApiKey(var.clone())),
            },
        }
    }

    /// POST with bounded exponential backoff on transport errors and 5xx.
    fn post(&self, body: &serde_json::Value) -> Result<ChatResponse, GatewayError> {
        let url = format!("{}/chat/completions", self.config.endpoint_url.trim_end_matches('/'));
        let bearer = self.bearer()?;
        let policy = self.config.retry;
        let mut delay = policy.base_delay;
        let mut last_error = String::new();

        for attempt in 1..=policy.attempts {
            if attempt > 1 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            let mut req = self.client.post(&url).json(body);
            if let Some(key) = &bearer {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.text().unwrap_or_default();
                    if (200..300).contains(&status) {
                        return serde_json::from_str(&text).map_err(|e| {
                            GatewayError::InvalidResponse(format!("{e}; body: {text}"))
                        });
                    }
                    if (500..600).contains(&status) {
                        last_error = format!("status {status}: {text}");
                        continue;
                    }
                    return Err(GatewayError::Endpoint { status, body: text });
                }
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            }
        }
        Err(GatewayError::Transport { attempts: policy.attempts, message: last_error })
    }

    fn messages_json(messages: &MessageSequence) -> serde_json::Value {
        json!(messages
            .messages()
            .iter()
            .map(|m| json!({"role": m.role.as_str(), "content": m.content}))
            .collect::<Vec<_>>())
    }
}

impl LlmBackend for RemoteBackend {
    fn complete(
        &self,
        messages: &MessageSequence,
        params: &DecodeParams,
    ) -> Result<String, GatewayError> {
        if messages.is_empty() {
            return Err(GatewayError::EmptyMessages);
        }
        let mut body = json!({
            "model": self.config.model_name,
            "messages": Self::messages_json(messages),
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        if !params.stop_sequences.is_empty() {
            body["stop"] = json!(params.stop_sequences);
        }
        let resp = self.post(&body)?;
        let content = resp
            .choices
            .first()
            .and_then(|c| c.message.content.clone())
            .ok_or_else(|| GatewayError::InvalidResponse("choices[0].message.content missing".into()))?;
        Ok(apply_stop(&content, &params.stop_sequences))
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
        let body = json!({
            "model": self.config.model_name,
            "messages": Self::messages_json(messages),
            "temperature": 0.0,
            "max_tokens": 1,
            "logprobs": true,
            "top_logprobs": self.config.top_logprobs,
        });
        let resp = self.post(&body)?;
        let choice = resp
            .choices
            .first()
            .ok_or_else(|| GatewayError::InvalidResponse("empty choices".into()))?;
        let positions = choice
            .logprobs
            .as_ref()
            .and_then(|l| l.content.as_ref())
            .filter(|c| !c.is_empty())
            .ok_or_else(|| {
                GatewayError::LogprobsUnavailable(
                    "response carries no per-token log-probabilities; refusing to fall back to sampled text"
                        .into(),
                )
            })?;
        let first = &positions[0];
        // Alternatives at the first generated position; the sampled token
        // itself stands in when the endpoint returns no top list.
        let alternatives: Vec<(&str, f64)> = if first.top_logprobs.is_empty() {
            vec![(first.token.as_str(), first.logprob)]
        } else {
            first
                .top_logprobs
                .iter()
                .map(|t| (t.token.as_str(), t.logprob))
                .collect()
        };
        let raw: Vec<f64> = labels
            .iter()
            .map(|label| {
                let mass: f64 = alternatives
                    .iter()
                    .filter(|(token, _)| {
                        let t = normalize_token(token);
                        !t.is_empty() && label.starts_with(t)
                    })
                    .map(|(_, lp)| lp.exp())
                    .sum();
                mass.min(1.0)
            })
            .collect();
        Ok(LabelDistribution::from_raw(
            labels.iter().map(|l| l.to_string()).collect(),
            raw,
        ))
    }

    fn name(&self) -> &str {
        &self.name
    }
}
