//! Prompt template library and model-output parsers.
//!
//! Templates are stored as UTF-8 text files under a versioned directory
//! (`templates/v1/`), one file per template with a locale suffix
//! (`editor_edit.en.tmpl`). A file is a sequence of role blocks:
//!
//! ```text
//! [[system]]
//! ...content...
//! [[user]]
//! ...content with {{placeholder}} markers...
//! ```
//!
//! The built-in set is embedded at compile time; [`PromptLibrary::from_dir`]
//! loads the same format from disk. Few-shot exemplar text is immutable and
//! pinned by golden files in the test suite.
//!
//! The `zh` variants are convenience translations of the instructional text
//! (field labels translated, exemplar facts and classification labels kept in
//! English) and are not from the original work.

mod parse;

pub use parse::{parse_answer, parse_cot, ChainOfThought, ParseMode};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use crate::gateway::{Message, MessageSequence, Role};

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("template {template}: missing binding for placeholder {name:?}")]
    MissingBinding { template: &'static str, name: String },
    #[error("template {template}: unknown placeholder binding {name:?}")]
    UnknownPlaceholder { template: &'static str, name: String },
    #[error("invalid template file {0}: {1}")]
    InvalidTemplate(String, String),
    #[error("chain of thought is empty")]
    EmptyCot,
    #[error("answer is empty")]
    EmptyAnswer,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// The ten prompt templates of the pipeline and the data-construction flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateId {
    /// Retrieval-augmented CoT + answer generation ([STEP]/[ANSWER] format).
    RagCot,
    /// Regenerate a CoT tail from a fixed step prefix.
    PrefixGuided,
    /// Two answers: semantically consistent (A) or different (B)?
    AnswerConflict,
    /// Two sentences: conflicting (A), supporting (B), or unrelated (C)?
    StepConflict,
    /// Restate a CoT step as a declarative encyclopedic sentence.
    Rewrite,
    /// The CoT editor: (question, old CoT, new knowledge) -> new CoT.
    EditorEdit,
    /// Few-shot direct answering.
    DirectAnswer,
    /// Few-shot CoT reconstruction from a question/answer pair.
    CotFromQA,
    /// In-pipeline conflict classification over Contradict/Support/Unrelated.
    PipelineConflict,
    /// Final answer attending to the edited CoT.
    FinalAnswer,
}

impl TemplateId {
    pub const ALL: [TemplateId; 10] = [
        TemplateId::RagCot,
        TemplateId::PrefixGuided,
        TemplateId::AnswerConflict,
        TemplateId::StepConflict,
        TemplateId::Rewrite,
        TemplateId::EditorEdit,
        TemplateId::DirectAnswer,
        TemplateId::CotFromQA,
        TemplateId::PipelineConflict,
        TemplateId::FinalAnswer,
    ];

    /// File stem of the template's on-disk form.
    pub fn file_stem(self) -> &'static str {
        match self {
            TemplateId::RagCot => "rag_cot",
            TemplateId::PrefixGuided => "prefix_guided",
            TemplateId::AnswerConflict => "answer_conflict",
            TemplateId::StepConflict => "step_conflict",
            TemplateId::Rewrite => "rewrite",
            TemplateId::EditorEdit => "editor_edit",
            TemplateId::DirectAnswer => "direct_answer",
            TemplateId::CotFromQA => "cot_from_qa",
            TemplateId::PipelineConflict => "pipeline_conflict",
            TemplateId::FinalAnswer => "final_answer",
        }
    }
}

/// Prompt language variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Locale {
    #[default]
    En,
    Zh,
}

impl Locale {
    pub fn suffix(self) -> &'static str {
        match self {
            Locale::En => "en",
            Locale::Zh => "zh",
        }
    }
}

impl std::str::FromStr for Locale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "en" => Ok(Locale::En),
            "zh" => Ok(Locale::Zh),
            other => Err(format!("unknown locale {other:?} (expected en or zh)")),
        }
    }
}

/// One parsed template: role-tagged messages with `{{name}}` placeholders.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: TemplateId,
    messages: Vec<Message>,
    placeholders: BTreeSet<String>,
}

fn extract_placeholders(text: &str, into: &mut BTreeSet<String>) {
    let mut rest = text;
    while let Some(start) = rest.find("{{") {
        rest = &rest[start + 2..];
        if let Some(end) = rest.find("}}") {
            let name = &rest[..end];
            if !name.is_empty()
                && name
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
            {
                into.insert(name.to_string());
            }
            rest = &rest[end + 2..];
        } else {
            break;
        }
    }
}

impl PromptTemplate {
    fn parse(id: TemplateId, source: &str, file: &str) -> Result<Self, PromptError> {
        let messages = parse_sequence_text(source)
            .map_err(|e| PromptError::InvalidTemplate(file.to_string(), e))?;
        let mut placeholders = BTreeSet::new();
        for m in &messages {
            extract_placeholders(&m.content, &mut placeholders);
        }
        Ok(PromptTemplate { id, messages, placeholders })
    }

    pub fn placeholders(&self) -> &BTreeSet<String> {
        &self.placeholders
    }

    /// Substitute bindings into the template. Bindings must cover exactly the
    /// declared placeholder set.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<MessageSequence, PromptError> {
        let stem = self.id.file_stem();
        for name in bindings.keys() {
            if !self.placeholders.contains(name) {
                return Err(PromptError::UnknownPlaceholder { template: stem, name: name.clone() });
            }
        }
        for name in &self.placeholders {
            if !bindings.contains_key(name) {
                return Err(PromptError::MissingBinding { template: stem, name: name.clone() });
            }
        }
        let messages = self
            .messages
            .iter()
            .map(|m| {
                let mut content = m.content.clone();
                for (name, value) in bindings {
                    content = content.replace(&format!("{{{{{name}}}}}"), value);
                }
                Message { role: m.role, content }
            })
            .collect();
        Ok(MessageSequence::new(messages))
    }
}

/// Parse the `[[role]]`-delimited message format.
pub fn parse_sequence_text(source: &str) -> Result<Vec<Message>, String> {
    let mut messages: Vec<(Role, Vec<&str>)> = Vec::new();
    for line in source.lines() {
        let role = match line {
            "[[system]]" => Some(Role::System),
            "[[user]]" => Some(Role::User),
            "[[assistant]]" => Some(Role::Assistant),
            _ => None,
        };
        match role {
            Some(role) => messages.push((role, Vec::new())),
            None => match messages.last_mut() {
                Some((_, lines)) => lines.push(line),
                None => return Err(format!("content before first role marker: {line:?}")),
            },
        }
    }
    if messages.is_empty() {
        return Err("no role markers found".into());
    }
    Ok(messages
        .into_iter()
        .map(|(role, lines)| Message { role, content: lines.join("\n") })
        .collect())
}

/// Serialize a message sequence to the `[[role]]` text format (the golden
/// file format).
pub fn sequence_to_text(messages: &MessageSequence) -> String {
    let mut out = String::new();
    for m in messages.messages() {
        out.push_str("[[");
        out.push_str(m.role.as_str());
        out.push_str("]]\n");
        out.push_str(&m.content);
        out.push('\n');
    }
    out
}

macro_rules! builtin {
    ($stem:literal) => {
        (
            include_str!(concat!("../../templates/v1/", $stem, ".en.tmpl")),
            include_str!(concat!("../../templates/v1/", $stem, ".zh.tmpl")),
        )
    };
}

fn builtin_source(id: TemplateId, locale: Locale) -> &'static str {
    let (en, zh) = match id {
        TemplateId::RagCot => builtin!("rag_cot"),
        TemplateId::PrefixGuided => builtin!("prefix_guided"),
        TemplateId::AnswerConflict => builtin!("answer_conflict"),
        TemplateId::StepConflict => builtin!("step_conflict"),
        TemplateId::Rewrite => builtin!("rewrite"),
        TemplateId::EditorEdit => builtin!("editor_edit"),
        TemplateId::DirectAnswer => builtin!("direct_answer"),
        TemplateId::CotFromQA => builtin!("cot_from_qa"),
        TemplateId::PipelineConflict => builtin!("pipeline_conflict"),
        TemplateId::FinalAnswer => builtin!("final_answer"),
    };
    match locale {
        Locale::En => en,
        Locale::Zh => zh,
    }
}

/// The full template set for one locale. Immutable after load; all
/// operations are pure.
#[derive(Debug, Clone)]
pub struct PromptLibrary {
    locale: Locale,
    templates: HashMap<TemplateId, PromptTemplate>,
}

impl PromptLibrary {
    /// The compiled-in template set.
    pub fn builtin(locale: Locale) -> Self {
        let templates = TemplateId::ALL
            .iter()
            .map(|&id| {
                let tmpl = PromptTemplate::parse(id, builtin_source(id, locale), id.file_stem())
                    .expect("built-in templates are well-formed");
                (id, tmpl)
            })
            .collect();
        PromptLibrary { locale, templates }
    }

    /// Load `{stem}.{locale}.tmpl` files from a directory.
    pub fn from_dir(dir: impl AsRef<Path>, locale: Locale) -> Result<Self, PromptError> {
        let mut templates = HashMap::new();
        for &id in &TemplateId::ALL {
            let file = format!("{}.{}.tmpl", id.file_stem(), locale.suffix());
            let path = dir.as_ref().join(&file);
            let source = std::fs::read_to_string(&path)?;
            templates.insert(id, PromptTemplate::parse(id, &source, &file)?);
        }
        Ok(PromptLibrary { locale, templates })
    }

    pub fn locale(&self) -> Locale {
        self.locale
    }

    pub fn template(&self, id: TemplateId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn render(
        &self,
        id: TemplateId,
        bindings: &BTreeMap<String, String>,
    ) -> Result<MessageSequence, PromptError> {
        self.template(id).render(bindings)
    }
}

/// Convenience builder for binding maps.
pub fn bindings<const N: usize>(pairs: [(&str, &str); N]) -> BTreeMap<String, String> {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}
