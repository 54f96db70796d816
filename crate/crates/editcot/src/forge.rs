//! Training-data construction for the CoT editor.
//!
//! From a corpus of questions, manufacture (question, old CoT, new
//! knowledge, new CoT) tuples: generate a retrieval-augmented CoT, regenerate
//! its tail from each step prefix without retrieval, keep the pairs whose
//! answers conflict and whose first diverging step conflicts, and rewrite the
//! original diverging step into a standalone knowledge sentence. The
//! divergent CoT becomes the editor's input (`old_cot`) and the original RAG
//! CoT its target (`new_cot`).
//!
//! Fine-tuning itself is out of scope: this module emits training JSONL for
//! an external trainer.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::gateway::{DecodeParams, GatewayError, LlmBackend};
use crate::prompts::{
    bindings, parse_cot, ChainOfThought, ParseMode, PromptError, PromptLibrary, TemplateId,
};

#[derive(Debug, thiserror::Error)]
pub enum ForgeError {
    #[error("invalid forge config: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("retriever failed: {0}")]
    Retriever(String),
    #[error("{template}: {source}")]
    Gateway {
        template: &'static str,
        #[source]
        source: GatewayError,
    },
    #[error("{template}: {source}")]
    Prompt {
        template: &'static str,
        #[source]
        source: PromptError,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// One corpus question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceQuestion {
    pub id: String,
    pub question: String,
}

/// Load `{id, question}` JSONL; ids are assigned when absent.
pub fn load_questions_path(path: impl AsRef<Path>) -> Result<Vec<SourceQuestion>, ForgeError> {
    let file = std::fs::File::open(path.as_ref())?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_question_line(&line, i)?);
    }
    Ok(out)
}

pub fn load_questions_str(text: &str) -> Result<Vec<SourceQuestion>, ForgeError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| parse_question_line(l, i))
        .collect()
}

fn parse_question_line(line: &str, index: usize) -> Result<SourceQuestion, ForgeError> {
    #[derive(Deserialize)]
    struct Raw {
        #[serde(default)]
        id: Option<String>,
        question: String,
    }
    let raw: Raw = serde_json::from_str(line)
        .map_err(|e| ForgeError::InvalidInput(format!("question line {}: {e}", index + 1)))?;
    if raw.question.trim().is_empty() {
        return Err(ForgeError::InvalidInput(format!(
            "question line {} is empty",
            index + 1
        )));
    }
    Ok(SourceQuestion {
        id: raw.id.unwrap_or_else(|| format!("q-{:06}", index)),
        question: raw.question,
    })
}

/// Supplies top-k paragraphs per question. The real corpus retriever is
/// external; a file-backed stub ships for tests and offline runs.
pub trait DocumentRetriever: Send + Sync {
    fn retrieve(&self, question: &SourceQuestion) -> Result<Vec<String>, ForgeError>;
}

impl<F> DocumentRetriever for F
where
    F: Fn(&SourceQuestion) -> Result<Vec<String>, ForgeError> + Send + Sync,
{
    fn retrieve(&self, question: &SourceQuestion) -> Result<Vec<String>, ForgeError> {
        self(question)
    }
}

/// File-backed retriever: a JSON object mapping question id to a fixed list
/// of paragraphs.
pub struct FileRetriever {
    by_id: HashMap<String, Vec<String>>,
}

impl FileRetriever {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ForgeError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }

    pub fn from_json(json: &str) -> Result<Self, ForgeError> {
        Ok(FileRetriever { by_id: serde_json::from_str(json)? })
    }
}

impl DocumentRetriever for FileRetriever {
    fn retrieve(&self, question: &SourceQuestion) -> Result<Vec<String>, ForgeError> {
        self.by_id
            .get(&question.id)
            .cloned()
            .ok_or_else(|| ForgeError::Retriever(format!("no documents for question {}", question.id)))
    }
}

/// Tunables for the construction pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeConfig {
    /// Both conflict gates fire at probability >= this (inclusive).
    pub conflict_threshold: f64,
    /// Paragraphs fed to the retrieval-augmented generation step.
    pub top_docs: usize,
    /// Seed the diverging step with the first word of the original step.
    pub first_word_guidance: bool,
    /// Reject patterns applied to the rewritten knowledge sentence and to
    /// every step of both CoTs.
    pub quality_regexes: Vec<String>,
}

impl Default for ForgeConfig {
    fn default() -> Self {
        ForgeConfig {
            conflict_threshold: 0.6,
            top_docs: 5,
            first_word_guidance: true,
            quality_regexes: default_quality_regexes(),
        }
    }
}

/// Rejects RAG artifacts: meta-references to the provided context and
/// leftover step/answer tokens.
pub fn default_quality_regexes() -> Vec<String> {
    vec![
        r"(?i)the background information".into(),
        r"(?i)the passage".into(),
        r"(?i)according to the context".into(),
        r"\[STEP\]|\[ANSWER\]".into(),
    ]
}

impl ForgeConfig {
    fn compile(&self) -> Result<Vec<Regex>, ForgeError> {
        if !(self.conflict_threshold > 0.0 && self.conflict_threshold <= 1.0) {
            return Err(ForgeError::InvalidConfig(
                "conflict_threshold must be in (0, 1]".into(),
            ));
        }
        if self.top_docs < 1 {
            return Err(ForgeError::InvalidConfig("top_docs must be >= 1".into()));
        }
        self.quality_regexes
            .iter()
            .map(|p| {
                Regex::new(p).map_err(|e| ForgeError::InvalidConfig(format!("bad regex {p:?}: {e}")))
            })
            .collect()
    }
}

/// One emitted editor-training tuple. `old_cot` is the divergent CoT the
/// editor must fix, `new_cot` the original retrieval-grounded CoT it should
/// produce, and `new_knowledge` the rewritten diverging step. `diverge_index`
/// counts the shared prefix steps (0-based index of the first difference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub question: String,
    pub old_cot: ChainOfThought,
    pub new_knowledge: String,
    pub new_cot: ChainOfThought,
    pub diverge_index: usize,
    pub provenance: Vec<String>,
}

#[derive(Serialize)]
struct TrainingRow<'a> {
    question: &'a str,
    old_cot: &'a [String],
    new_knowledge: &'a str,
    new_cot: &'a [String],
    diverge_index: usize,
    provenance: &'a [String],
}

/// Serialize examples to the training JSONL format (steps only; field names
/// mirror the editor prompt bindings).
pub fn examples_to_jsonl(examples: &[TrainingExample]) -> Result<String, ForgeError> {
    let mut out = String::new();
    for ex in examples {
        let row = TrainingRow {
            question: &ex.question,
            old_cot: &ex.old_cot.steps,
            new_knowledge: &ex.new_knowledge,
            new_cot: &ex.new_cot.steps,
            diverge_index: ex.diverge_index,
            provenance: &ex.provenance,
        };
        out.push_str(&serde_json::to_string(&row)?);
        out.push('\n');
    }
    Ok(out)
}

/// Outcome of one probability gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateOutcome {
    pub fired: bool,
    pub probability: f64,
}

/// Why a (question, k) candidate was not emitted.
pub mod reject {
    pub const PART2_FAILED: &str = "part2_failed";
    pub const ANSWER_CONSISTENT: &str = "answer_consistent";
    pub const NO_DIVERGENCE: &str = "no_divergence";
    pub const DIVERGENCE_MISMATCH: &str = "divergence_mismatch";
    pub const STEP_NOT_CONFLICTING: &str = "step_not_conflicting";
    pub const REWRITE_FAILED: &str = "rewrite_failed";
    pub const QUALITY_FILTERED: &str = "quality_filtered";
    pub const PREFIX_VIOLATION: &str = "prefix_violation";
    pub const RETRIEVER_FAILED: &str = "retriever_failed";
    pub const PART1_FAILED: &str = "part1_failed";
}

/// Per-candidate audit record; the gate probabilities make accept/reject
/// decisions replayable.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateOutcome {
    pub k: usize,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reject_reason: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reject_detail: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub answer_conflict_prob: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_conflict_prob: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionOutcome {
    pub question_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub candidates: Vec<CandidateOutcome>,
    pub accepted: usize,
}

/// Batch summary: per-question outcomes plus counts per rejection reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForgeReport {
    pub processed: usize,
    pub accepted: usize,
    pub rejection_counts: BTreeMap<String, usize>,
    pub questions: Vec<QuestionOutcome>,
}

impl ForgeReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn first_word(step: &str) -> &str {
    step.split_whitespace().next().unwrap_or("")
}

/// Part I: retrieval-augmented CoT and answer in `[STEP]`/`[ANSWER]` format.
pub fn part1_rag_cot(
    backend: &dyn LlmBackend,
    prompts: &PromptLibrary,
    question: &str,
    documents: &[String],
) -> Result<(ChainOfThought, String), ForgeError> {
    if documents.is_empty() {
        return Err(ForgeError::InvalidInput("documents must be non-empty".into()));
    }
    let id = TemplateId::RagCot;
    let msgs = prompts
        .render(
            id,
            &bindings([("documents", documents.join("\n\n").as_str()), ("question", question)]),
        )
        .map_err(|source| ForgeError::Prompt { template: id.file_stem(), source })?;
    let text = backend
        .complete(&msgs, &DecodeParams::for_cot())
        .map_err(|source| ForgeError::Gateway { template: id.file_stem(), source })?;
    let cot = parse_cot(&text, ParseMode::StepToken)
        .map_err(|source| ForgeError::Prompt { template: id.file_stem(), source })?;
    let answer = cot
        .answer
        .clone()
        .ok_or(ForgeError::Prompt { template: id.file_stem(), source: PromptError::EmptyAnswer })?;
    Ok((cot, answer))
}

/// The assistant prefill for part II: the first `k-1` steps in `[STEP]`
/// form, optionally seeded with the first word of the original step `k`.
pub fn prefix_fill(base_cot: &ChainOfThought, k: usize, first_word_guidance: bool) -> String {
    let mut parts: Vec<String> =
        base_cot.steps[..k - 1].iter().map(|s| format!("[STEP] {s}")).collect();
    if first_word_guidance {
        let word = first_word(&base_cot.steps[k - 1]);
        parts.push(format!("[STEP] {word}"));
    }
    if parts.is_empty() {
        "[STEP]".to_string()
    } else {
        parts.join("\n")
    }
}

/// Part II: regenerate the CoT from the first `k-1` steps without retrieval.
/// `k` is 1-based. The returned CoT is prefix steps plus newly generated
/// steps; the answer comes from the generated `[ANSWER]` token.
pub fn part2_prefix_generate(
    backend: &dyn LlmBackend,
    prompts: &PromptLibrary,
    question: &str,
    base_cot: &ChainOfThought,
    k: usize,
    config: &ForgeConfig,
) -> Result<(ChainOfThought, String), ForgeError> {
    if k < 1 || k > base_cot.len() {
        return Err(ForgeError::InvalidInput(format!(
            "k = {k} out of range 1..={}",
            base_cot.len()
        )));
    }
    let id = TemplateId::PrefixGuided;
    let prefill = prefix_fill(base_cot, k, config.first_word_guidance);
    let msgs = prompts
        .render(id, &bindings([("question", question), ("prefix", prefill.as_str())]))
        .map_err(|source| ForgeError::Prompt { template: id.file_stem(), source })?;
    let completion = backend
        .complete(&msgs, &DecodeParams::for_cot())
        .map_err(|source| ForgeError::Gateway { template: id.file_stem(), source })?;
    // The completion continues the prefilled assistant turn.
    let full = format!("{prefill}{completion}");
    let cot = parse_cot(&full, ParseMode::StepToken)
        .map_err(|source| ForgeError::Prompt { template: id.file_stem(), source })?;
    let answer = cot
        .answer
        .clone()
        .ok_or(ForgeError::Prompt { template: id.file_stem(), source: PromptError::EmptyAnswer })?;
    Ok((cot, answer))
}

/// Part III gate (1): do the two final answers conflict? Fires at
/// P(B = different) >= threshold, inclusive.
pub fn answer_conflict(
    backend: &dyn LlmBackend,
    prompts: &PromptLibrary,
    question: &str,
    answer_1: &str,
    answer_2: &str,
    threshold: f64,
) -> Result<GateOutcome, ForgeError> {
    let id = TemplateId::AnswerConflict;
    let msgs = prompts
        .render(
            id,
            &bindings([("question", question), ("answer_1", answer_1), ("answer_2", answer_2)]),
        )
        .map_err(|source| ForgeError::Prompt { template: id.file_stem(), source })?;
    let dist = backend
        .classify(&msgs, &["A", "B"])
        .map_err(|source| ForgeError::Gateway { template: id.file_stem(), source })?;
    let probability = dist.raw[1];
    Ok(GateOutcome { fired: probability >= threshold, probability })
}

/// Part III gate (2): do the two diverging steps conflict? Fires at
/// P(A = conflicting) >= threshold, inclusive.
pub fn step_conflict(
    backend: &dyn LlmBackend,
    prompts: &PromptLibrary,
    step_1: &str,
    step_2: &str,
    threshold: f64,
) -> Result<GateOutcome, ForgeError> {
    let id = TemplateId::StepConflict;
    let msgs = prompts
        .render(id, &bindings([("sentence_1", step_1), ("sentence_2", step_2)]))
        .map_err(|source| ForgeError::Prompt { template: id.file_stem(), source })?;
    let dist = backend
        .classify(&msgs, &["A", "B", "C"])
        .map_err(|source| ForgeError::Gateway { template: id.file_stem(), source })?;
    let probability = dist.raw[0];
    Ok(GateOutcome { fired: probability >= threshold, probability })
}

/// Smallest index where the step strings differ after whitespace trimming;
/// `None` when the CoTs are equal or one is a prefix of the other.
pub fn first_divergence(cot_a: &ChainOfThought, cot_b: &ChainOfThought) -> Option<usize> {
    let shared = cot_a.len().min(cot_b.len());
    (0..shared).find(|&i| cot_a.steps[i].trim() != cot_b.steps[i].trim())
}

/// Part IV: restate the diverging step as a standalone encyclopedic
/// sentence.
pub fn rewrite_step(
    backend: &dyn LlmBackend,
    prompts: &PromptLibrary,
    step: &str,
) -> Result<String, ForgeError> {
    if step.trim().is_empty() {
        return Err(ForgeError::InvalidInput("step must be non-empty".into()));
    }
    let id = TemplateId::Rewrite;
    let msgs = prompts
        .render(id, &bindings([("sentence", step)]))
        .map_err(|source| ForgeError::Prompt { template: id.file_stem(), source })?;
    let text = backend
        .complete(&msgs, &DecodeParams::for_cot())
        .map_err(|source| ForgeError::Gateway { template: id.file_stem(), source })?;
    let rewritten = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if rewritten.is_empty() {
        return Err(ForgeError::Prompt { template: id.file_stem(), source: PromptError::EmptyAnswer });
    }
    Ok(rewritten)
}

struct Candidacy<'a> {
    question: &'a SourceQuestion,
    base_cot: &'a ChainOfThought,
    base_answer: &'a str,
}

fn process_candidate(
    backend: &dyn LlmBackend,
    prompts: &PromptLibrary,
    config: &ForgeConfig,
    quality: &[Regex],
    ctx: &Candidacy<'_>,
    k: usize,
) -> (CandidateOutcome, Option<TrainingExample>) {
    let mut outcome = CandidateOutcome {
        k,
        accepted: false,
        reject_reason: None,
        reject_detail: None,
        answer_conflict_prob: None,
        step_conflict_prob: None,
    };
    let reject = |outcome: &mut CandidateOutcome, reason: &str, detail: Option<String>| {
        outcome.reject_reason = Some(reason.to_string());
        outcome.reject_detail = detail;
    };

    let (cot_k, answer_k) =
        match part2_prefix_generate(backend, prompts, &ctx.question.question, ctx.base_cot, k, config) {
            Ok(v) => v,
            Err(e) => {
                reject(&mut outcome, reject::PART2_FAILED, Some(e.to_string()));
                return (outcome, None);
            }
        };

    let gate1 = match answer_conflict(
        backend,
        prompts,
        &ctx.question.question,
        ctx.base_answer,
        &answer_k,
        config.conflict_threshold,
    ) {
        Ok(g) => g,
        Err(e) => {
            reject(&mut outcome, reject::PART2_FAILED, Some(e.to_string()));
            return (outcome, None);
        }
    };
    outcome.answer_conflict_prob = Some(gate1.probability);
    if !gate1.fired {
        reject(&mut outcome, reject::ANSWER_CONSISTENT, None);
        return (outcome, None);
    }

    let diverge = match first_divergence(ctx.base_cot, &cot_k) {
        Some(d) => d,
        None => {
            reject(&mut outcome, reject::NO_DIVERGENCE, None);
            return (outcome, None);
        }
    };
    if diverge != k - 1 {
        reject(
            &mut outcome,
            reject::DIVERGENCE_MISMATCH,
            Some(format!("first difference at {diverge}, expected {}", k - 1)),
        );
        return (outcome, None);
    }

    let gate2 = match step_conflict(
        backend,
        prompts,
        &ctx.base_cot.steps[k - 1],
        &cot_k.steps[k - 1],
        config.conflict_threshold,
    ) {
        Ok(g) => g,
        Err(e) => {
            reject(&mut outcome, reject::PART2_FAILED, Some(e.to_string()));
            return (outcome, None);
        }
    };
    outcome.step_conflict_prob = Some(gate2.probability);
    if !gate2.fired {
        reject(&mut outcome, reject::STEP_NOT_CONFLICTING, None);
        return (outcome, None);
    }

    let new_knowledge = match rewrite_step(backend, prompts, &ctx.base_cot.steps[k - 1]) {
        Ok(s) => s,
        Err(e) => {
            reject(&mut outcome, reject::REWRITE_FAILED, Some(e.to_string()));
            return (outcome, None);
        }
    };

    let all_steps = cot_k.steps.iter().chain(ctx.base_cot.steps.iter());
    for pattern in quality {
        if pattern.is_match(&new_knowledge)
            || all_steps.clone().any(|s| pattern.is_match(s))
        {
            reject(&mut outcome, reject::QUALITY_FILTERED, Some(pattern.to_string()));
            return (outcome, None);
        }
    }

    // Structural prefix law: exactly k-1 shared steps and a step at k-1 in
    // both. The parser trims steps, so equality here is byte equality.
    let prefix_ok = cot_k.len() > k - 1
        && ctx.base_cot.len() > k - 1
        && cot_k.steps[..k - 1] == ctx.base_cot.steps[..k - 1];
    if !prefix_ok {
        reject(&mut outcome, reject::PREFIX_VIOLATION, None);
        return (outcome, None);
    }

    outcome.accepted = true;
    let qid = &ctx.question.id;
    let example = TrainingExample {
        question: ctx.question.question.clone(),
        old_cot: cot_k,
        new_knowledge,
        new_cot: ctx.base_cot.clone(),
        diverge_index: k - 1,
        provenance: vec![
            format!("{qid}/part1"),
            format!("{qid}/part2.k{k}"),
            format!("{qid}/rewrite.k{k}"),
        ],
    };
    (outcome, Some(example))
}

/// An emitted example keyed by (question id, k) for the final stable sort.
type KeyedExample = (String, usize, TrainingExample);

fn process_question(
    question: &SourceQuestion,
    retriever: &dyn DocumentRetriever,
    backend: &dyn LlmBackend,
    prompts: &PromptLibrary,
    config: &ForgeConfig,
    quality: &[Regex],
) -> (QuestionOutcome, Vec<KeyedExample>) {
    let mut q_outcome = QuestionOutcome {
        question_id: question.id.clone(),
        error: None,
        candidates: Vec::new(),
        accepted: 0,
    };
    let mut keyed = Vec::new();

    let docs = match retriever.retrieve(question) {
        Ok(mut docs) => {
            docs.truncate(config.top_docs);
            docs
        }
        Err(e) => {
            q_outcome.error = Some(format!("{}: {e}", reject::RETRIEVER_FAILED));
            return (q_outcome, keyed);
        }
    };
    if docs.is_empty() {
        q_outcome.error =
            Some(format!("{}: retriever returned no documents", reject::RETRIEVER_FAILED));
        return (q_outcome, keyed);
    }

    let (base_cot, base_answer) = match part1_rag_cot(backend, prompts, &question.question, &docs) {
        Ok(v) => v,
        Err(e) => {
            q_outcome.error = Some(format!("{}: {e}", reject::PART1_FAILED));
            return (q_outcome, keyed);
        }
    };

    let ctx = Candidacy { question, base_cot: &base_cot, base_answer: &base_answer };
    for k in 1..=base_cot.len() {
        let (outcome, example) = process_candidate(backend, prompts, config, quality, &ctx, k);
        if let Some(example) = example {
            q_outcome.accepted += 1;
            keyed.push((question.id.clone(), k, example));
        }
        q_outcome.candidates.push(outcome);
    }
    (q_outcome, keyed)
}

/// Run the four-part construction over a question corpus. Per-question
/// errors are recorded in the report and never abort the batch. `parallel`
/// bounds concurrent question runs; output is deterministic either way
/// because examples and outcomes are sorted by question id, then k.
pub fn forge(
    questions: &[SourceQuestion],
    retriever: &dyn DocumentRetriever,
    backend: &dyn LlmBackend,
    prompts: &PromptLibrary,
    config: &ForgeConfig,
    parallel: usize,
) -> Result<(Vec<TrainingExample>, ForgeReport), ForgeError> {
    let quality = config.compile()?;
    let parallel = parallel.max(1).min(questions.len().max(1));

    let mut per_question: Vec<Option<(QuestionOutcome, Vec<KeyedExample>)>> =
        (0..questions.len()).map(|_| None).collect();

    if parallel <= 1 {
        for (i, question) in questions.iter().enumerate() {
            per_question[i] =
                Some(process_question(question, retriever, backend, prompts, config, &quality));
        }
    } else {
        let slots = std::sync::Mutex::new(&mut per_question);
        let cursor = std::sync::atomic::AtomicUsize::new(0);
        std::thread::scope(|scope| {
            for _ in 0..parallel {
                scope.spawn(|| loop {
                    let i = cursor.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= questions.len() {
                        return;
                    }
                    let result = process_question(
                        &questions[i],
                        retriever,
                        backend,
                        prompts,
                        config,
                        &quality,
                    );
                    slots.lock().unwrap()[i] = Some(result);
                });
            }
        });
    }

    let mut keyed: Vec<KeyedExample> = Vec::new();
    let mut outcomes: Vec<QuestionOutcome> = Vec::new();
    for entry in per_question.into_iter().flatten() {
        outcomes.push(entry.0);
        keyed.extend(entry.1);
    }

    outcomes.sort_by(|a, b| a.question_id.cmp(&b.question_id));
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut rejection_counts: BTreeMap<String, usize> = BTreeMap::new();
    for q in &outcomes {
        if let Some(err) = &q.error {
            let reason = err.split(':').next().unwrap_or("error").to_string();
            *rejection_counts.entry(reason).or_insert(0) += 1;
        }
        for c in &q.candidates {
            if let Some(reason) = &c.reject_reason {
                *rejection_counts.entry(reason.clone()).or_insert(0) += 1;
            }
        }
    }

    let examples: Vec<TrainingExample> = keyed.into_iter().map(|(_, _, e)| e).collect();
    let report = ForgeReport {
        processed: questions.len(),
        accepted: examples.len(),
        rejection_counts,
        questions: outcomes,
    };
    Ok((examples, report))
}
