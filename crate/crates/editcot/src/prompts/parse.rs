//! Parsers that turn model output back into domain types.

use serde::{Deserialize, Serialize};

use super::PromptError;

/// An ordered sequence of reasoning steps plus an optional final answer.
/// Steps are non-empty and never contain a newline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainOfThought {
    pub steps: Vec<String>,
    pub answer: Option<String>,
}

impl ChainOfThought {
    pub fn new(steps: Vec<String>, answer: Option<String>) -> Result<Self, PromptError> {
        if steps.is_empty() || steps.iter().any(|s| s.trim().is_empty()) {
            return Err(PromptError::EmptyCot);
        }
        debug_assert!(steps.iter().all(|s| !s.contains('\n')));
        Ok(ChainOfThought { steps, answer })
    }

    pub fn from_steps<I: IntoIterator<Item = S>, S: Into<String>>(
        steps: I,
    ) -> Result<Self, PromptError> {
        Self::new(steps.into_iter().map(Into::into).collect(), None)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Steps joined with single newlines — the form bound into templates.
    pub fn joined(&self) -> String {
        self.steps.join("\n")
    }
}

/// How a generated chain-of-thought is delimited.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// Steps introduced by a literal `[STEP]` token, answer by `[ANSWER]`.
    StepToken,
    /// One step per line; no answer token.
    Newline,
}

/// Labels stripped from the start of a newline-mode chain-of-thought. The
/// match is exact and case-sensitive. The Chinese entries serve the zh
/// template variants.
const COT_LABELS: [&str; 4] = ["New Thoughts:", "Thoughts:", "新思维链：", "思维链："];

/// Labels stripped from the start of an answer, longest first.
const ANSWER_LABELS: [&str; 4] = [
    "Answer from [New Thoughts]:",
    "来自[新思维链]的答案：",
    "Answer:",
    "答案：",
];

/// Collapse internal line breaks so a step satisfies the no-newline
/// invariant.
fn flatten_step(segment: &str) -> String {
    segment
        .split('\n')
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parse a generated chain-of-thought.
///
/// `StepToken` splits on the literal `[STEP]` token and takes everything
/// after the first `[ANSWER]` as the answer. `Newline` splits on newlines,
/// trims each line, drops empties, and strips a leading thought label; the
/// answer is absent.
pub fn parse_cot(text: &str, mode: ParseMode) -> Result<ChainOfThought, PromptError> {
    match mode {
        ParseMode::StepToken => {
            let (body, answer) = match text.find("[ANSWER]") {
                Some(pos) => {
                    let ans = text[pos + "[ANSWER]".len()..].trim();
                    (&text[..pos], (!ans.is_empty()).then(|| flatten_step(ans)))
                }
                None => (text, None),
            };
            let steps: Vec<String> = body
                .split("[STEP]")
                .map(flatten_step)
                .filter(|s| !s.is_empty())
                .collect();
            if steps.is_empty() {
                return Err(PromptError::EmptyCot);
            }
            Ok(ChainOfThought { steps, answer })
        }
        ParseMode::Newline => {
            let mut remaining = text.trim_start();
            for label in COT_LABELS {
                if let Some(rest) = remaining.strip_prefix(label) {
                    remaining = rest;
                    break;
                }
            }
            let steps: Vec<String> = remaining
                .split('\n')
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(str::to_owned)
                .collect();
            if steps.is_empty() {
                return Err(PromptError::EmptyCot);
            }
            Ok(ChainOfThought { steps, answer: None })
        }
    }
}

/// Extract a short answer: strip a leading answer label if present, trim,
/// and keep content up to the first newline.
pub fn parse_answer(text: &str) -> Result<String, PromptError> {
    let mut remaining = text.trim_start();
    for label in ANSWER_LABELS {
        if let Some(rest) = remaining.strip_prefix(label) {
            remaining = rest;
            break;
        }
    }
    let answer = remaining.trim().split('\n').next().unwrap_or("").trim().to_string();
    if answer.is_empty() {
        return Err(PromptError::EmptyAnswer);
    }
    Ok(answer)
}
