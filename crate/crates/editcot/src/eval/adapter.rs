//! Declarative dataset adapters.
//!
//! Benchmark files differ in field names and nesting; a JSON adapter config
//! maps paths inside each dataset record onto [`EvalInstance`] fields, so
//! dataset-version drift is absorbed by configuration rather than code.
//!
//! Paths are dot-separated (`requested_rewrite[*].target_new.str`) with
//! `[*]` fanning out over arrays and `[N]` indexing. Edit sentences may also
//! be assembled with templates: `{path}` substitutes a resolved value, and
//! `{path1|path2}` resolves `path1` (a string containing `{}`) and splices
//! in `path2` — enough to build "prompt + subject + target" sentences from
//! triple-style records.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{EvalError, EvalInstance};
use crate::store::{EditRecord, MemoryLayout};

/// Aggregation rule declared by the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// An instance is correct when any of its questions is (MQuAKE-style).
    Multihop,
    /// Every question counts separately.
    PerQuestion,
}

/// How predictions are matched against gold answers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerMatch {
    /// Normalized string equality against the gold answers.
    Text,
    /// Golds are option letters; match the letter.
    OptionLetter,
    /// Golds are option letters; match the letter or the option's text.
    OptionText,
}

fn default_metric() -> MetricKind {
    MetricKind::Multihop
}

fn default_answer_match() -> AnswerMatch {
    AnswerMatch::Text
}

/// How to extract the edit records of one instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditExtract {
    /// Path to the per-instance array of edit objects; absent means the
    /// record itself is the single edit object.
    #[serde(default)]
    pub list_path: Option<String>,
    /// Path or `{..}` template for the pre-edit sentence (paired layout).
    #[serde(default)]
    pub pre: Option<String>,
    /// Path or `{..}` template for the post-edit sentence.
    pub post: String,
}

/// The adapter config file format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdapterConfig {
    /// Dataset display name.
    #[serde(default)]
    pub name: Option<String>,
    /// Path to a stable instance id; absent assigns positional ids.
    #[serde(default)]
    pub id_path: Option<String>,
    /// Paths contributing question paraphrases.
    pub question_paths: Vec<String>,
    /// Paths contributing acceptable gold answers.
    pub gold_paths: Vec<String>,
    pub edits: EditExtract,
    pub layout: MemoryLayout,
    #[serde(default = "default_metric")]
    pub metric: MetricKind,
    #[serde(default = "default_answer_match")]
    pub answer_match: AnswerMatch,
    /// Path to multiple-choice option texts, in letter order.
    #[serde(default)]
    pub options_path: Option<String>,
}

impl AdapterConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }

    pub fn from_json(json: &str) -> Result<Self, EvalError> {
        serde_json::from_str(json).map_err(|e| EvalError::Adapter(e.to_string()))
    }
}

/// A loaded benchmark plus the evaluation rules its adapter declared.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalDataset {
    pub name: String,
    pub instances: Vec<EvalInstance>,
    pub layout: MemoryLayout,
    pub metric: MetricKind,
    pub answer_match: AnswerMatch,
}

/// Resolve a dot path inside a JSON value.
fn resolve<'v>(root: &'v Value, path: &str) -> Vec<&'v Value> {
    let mut current = vec![root];
    if path.is_empty() {
        return current;
    }
    for segment in path.split('.') {
        let (key, wildcard, index) = match segment.strip_suffix("[*]") {
            Some(k) => (k, true, None),
            None => match segment.rfind('[') {
                Some(open) if segment.ends_with(']') => {
                    let idx: Option<usize> = segment[open + 1..segment.len() - 1].parse().ok();
                    (&segment[..open], false, idx)
                }
                _ => (segment, false, None),
            },
        };
        let mut next = Vec::new();
        for value in current {
            let target = if key.is_empty() { Some(value) } else { value.get(key) };
            let Some(target) = target else { continue };
            if wildcard {
                if let Value::Array(items) = target {
                    next.extend(items.iter());
                }
            } else if let Some(i) = index {
                if let Some(item) = target.get(i) {
                    next.push(item);
                }
            } else {
                next.push(target);
            }
        }
        current = next;
    }
    current
}

fn value_to_strings(value: &Value, out: &mut Vec<String>) {
    match value {
        Value::String(s) => out.push(s.clone()),
        Value::Number(n) => out.push(n.to_string()),
        Value::Bool(b) => out.push(b.to_string()),
        Value::Array(items) => items.iter().for_each(|v| value_to_strings(v, out)),
        Value::Null | Value::Object(_) => {}
    }
}

/// All strings reachable at `path`, arrays flattened.
pub fn resolve_strings(root: &Value, path: &str) -> Vec<String> {
    let mut out = Vec::new();
    for value in resolve(root, path) {
        value_to_strings(value, &mut out);
    }
    out
}

fn first_string(root: &Value, path: &str) -> Option<String> {
    resolve_strings(root, path).into_iter().next()
}

/// Render a `{path}` / `{path1|path2}` template against a JSON value; a bare
/// path (no braces) resolves directly.
pub fn render_field(root: &Value, spec: &str) -> Result<Option<String>, EvalError> {
    if !spec.contains('{') {
        return Ok(first_string(root, spec));
    }
    let mut out = String::new();
    let mut rest = spec;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        rest = &rest[open + 1..];
        let close = rest
            .find('}')
            .ok_or_else(|| EvalError::Adapter(format!("unclosed placeholder in {spec:?}")))?;
        let inner = &rest[..close];
        rest = &rest[close + 1..];
        let resolved = match inner.split_once('|') {
            None => first_string(root, inner),
            Some((a, b)) => {
                let outer = first_string(root, a);
                let splice = first_string(root, b);
                match (outer, splice) {
                    (Some(outer), Some(splice)) => Some(outer.replacen("{}", &splice, 1)),
                    _ => None,
                }
            }
        };
        match resolved {
            Some(s) => out.push_str(&s),
            None => return Ok(None),
        }
    }
    out.push_str(rest);
    Ok(Some(out))
}

fn parse_records(text: &str) -> Result<Vec<Value>, EvalError> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('[') {
        let value: Value = serde_json::from_str(text)?;
        match value {
            Value::Array(items) => Ok(items),
            _ => Err(EvalError::Dataset("top-level JSON must be an array".into())),
        }
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(EvalError::from))
            .collect()
    }
}

/// Load a dataset file (JSON array or JSONL) through an adapter config. All
/// format errors surface here, before any model call.
pub fn load_dataset(
    dataset_path: impl AsRef<Path>,
    config: &AdapterConfig,
) -> Result<EvalDataset, EvalError> {
    let text = std::fs::read_to_string(dataset_path.as_ref())?;
    let name = config.name.clone().unwrap_or_else(|| {
        dataset_path.as_ref().file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    load_dataset_str(&text, config, name)
}

pub fn load_dataset_str(
    text: &str,
    config: &AdapterConfig,
    name: String,
) -> Result<EvalDataset, EvalError> {
    let records = parse_records(text)?;
    let mut instances = Vec::with_capacity(records.len());
    let mut seen_ids = HashSet::new();

    for (i, record) in records.iter().enumerate() {
        let id = config
            .id_path
            .as_deref()
            .and_then(|p| first_string(record, p))
            .unwrap_or_else(|| format!("inst-{i:06}"));
        if !seen_ids.insert(id.clone()) {
            return Err(EvalError::Dataset(format!("duplicate instance id {id:?}")));
        }

        let mut questions = Vec::new();
        for path in &config.question_paths {
            questions.extend(resolve_strings(record, path));
        }
        if questions.is_empty() {
            return Err(EvalError::Dataset(format!("instance {id}: no questions resolved")));
        }

        let mut gold_answers = Vec::new();
        for path in &config.gold_paths {
            gold_answers.extend(resolve_strings(record, path));
        }
        if gold_answers.is_empty() {
            return Err(EvalError::Dataset(format!("instance {id}: no gold answers resolved")));
        }

        let edit_objects: Vec<&Value> = match &config.edits.list_path {
            Some(path) => resolve(record, path)
                .into_iter()
                .flat_map(|v| match v {
                    Value::Array(items) => items.iter().collect::<Vec<_>>(),
                    other => vec![other],
                })
                .collect(),
            None => vec![record],
        };
        if edit_objects.is_empty() {
            return Err(EvalError::Dataset(format!("instance {id}: no edit objects at list path")));
        }
        let mut edits = Vec::with_capacity(edit_objects.len());
        for (j, obj) in edit_objects.iter().enumerate() {
            let post = render_field(obj, &config.edits.post)?.ok_or_else(|| {
                EvalError::Dataset(format!("instance {id}: edit {j} resolved no post sentence"))
            })?;
            let pre = match &config.edits.pre {
                Some(spec) => render_field(obj, spec)?,
                None => None,
            };
            if config.layout == MemoryLayout::PairedPrePost && pre.is_none() {
                return Err(EvalError::Dataset(format!(
                    "instance {id}: paired layout but edit {j} resolved no pre sentence"
                )));
            }
            edits.push(EditRecord {
                id: format!("{id}/e{j}"),
                pre_edit: pre,
                post_edit: post,
                tags: Vec::new(),
            });
        }

        let options = match &config.options_path {
            Some(path) => resolve_strings(record, path),
            None => Vec::new(),
        };
        if config.answer_match == AnswerMatch::OptionText && options.is_empty() {
            return Err(EvalError::Dataset(format!(
                "instance {id}: answer_match option_text requires options"
            )));
        }

        instances.push(EvalInstance { id, questions, gold_answers, edits, options });
    }

    Ok(EvalDataset {
        name,
        instances,
        layout: config.layout,
        metric: config.metric,
        answer_match: config.answer_match,
    })
}
