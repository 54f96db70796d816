//! The iterative CoT-editing pipeline for one question.
//!
//! A run answers the question directly, reconstructs a chain-of-thought,
//! then loops: treat each CoT step as a retrieval query against the edit
//! memory, classify the retrieved fact against the whole CoT
//! (Contradict/Support/Unrelated), and on a contradiction have the editor
//! backend rewrite the CoT. The loop stops at the first iteration without a
//! retrieval hit, the first non-contradiction verdict, or the iteration
//! limit; the final answer is generated from whatever CoT survived.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::gateway::{DecodeParams, GatewayError, LabelDistribution, LlmBackend};
use crate::prompts::{
    bindings, parse_answer, parse_cot, ChainOfThought, ParseMode, PromptError, PromptLibrary,
    TemplateId,
};
use crate::store::{EditHit, EditMemory, RetrievalIndex};

/// The fixed, ordered label set for conflict classification.
pub const CONFLICT_LABELS: [&str; 3] = ["Contradict", "Support", "Unrelated"];

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("question must be non-empty")]
    EmptyQuestion,
    #[error("invalid run config: {0}")]
    InvalidConfig(String),
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
}

/// Tunables for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Upper bound on retrieve-verify-edit iterations.
    pub max_iterations: u32,
    /// Retrieval hits must score strictly above this.
    pub min_retrieval_score: f64,
    /// When true (default), an edit applied in an earlier iteration is never
    /// retrieved again in the same run; false is the faithful mode that
    /// reproduces re-retrieval behavior.
    pub exclude_applied_edits: bool,
    /// When false, the final answer ignores the edited CoT (ablation).
    pub final_answer_attends_new_cot: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_iterations: 4,
            min_retrieval_score: 0.0,
            exclude_applied_edits: true,
            final_answer_attends_new_cot: true,
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), EngineError> {
        if self.max_iterations < 1 {
            return Err(EngineError::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if self.min_retrieval_score < 0.0 {
            return Err(EngineError::InvalidConfig("min_retrieval_score must be >= 0".into()));
        }
        Ok(())
    }
}

/// Three-way conflict label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConflictLabel {
    Contradict,
    Support,
    Unrelated,
}

impl ConflictLabel {
    fn from_index(i: usize) -> Self {
        match i {
            0 => ConflictLabel::Contradict,
            1 => ConflictLabel::Support,
            _ => ConflictLabel::Unrelated,
        }
    }
}

/// Classification outcome plus the per-label probability mass it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictVerdict {
    pub label: ConflictLabel,
    pub distribution: LabelDistribution,
}

/// Why a run stopped iterating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    NoRetrievalHit,
    VerdictNotConflict,
    IterationLimit,
}

/// Everything observed during one retrieve-verify-edit iteration. The last
/// iteration of a run carries the stop reason; `cot_after` is present
/// exactly when the verdict was Contradict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub cot_before: ChainOfThought,
    pub step_index_hit: Option<usize>,
    pub hit: Option<EditHit>,
    pub verdict: Option<ConflictVerdict>,
    pub cot_after: Option<ChainOfThought>,
    pub stop_reason: Option<StopReason>,
}

/// Full audit record of one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub question: String,
    pub initial_answer: String,
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: StopReason,
    pub final_cot: ChainOfThought,
    pub final_answer: String,
}

impl PipelineTrace {
    /// How many edits were applied during the run.
    pub fn edits_applied(&self) -> usize {
        self.iterations.iter().filter(|it| it.cot_after.is_some()).count()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// What was recorded before a run aborted.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartialTrace {
    pub question: String,
    pub initial_answer: Option<String>,
    pub iterations: Vec<IterationRecord>,
    pub failed_stage: String,
}

/// A failed run: the error plus the partial trace up to the failure point.
#[derive(Debug, thiserror::Error)]
#[error("pipeline run failed at {}: {error}", partial.failed_stage)]
pub struct RunFailure {
    #[source]
    pub error: EngineError,
    pub partial: PartialTrace,
}

/// Scan CoT steps in order and return the first step with a retrieval hit.
pub fn find_fact(
    index: &RetrievalIndex,
    memory: &EditMemory,
    cot: &ChainOfThought,
    min_score: f64,
    exclude: &HashSet<String>,
) -> Option<(usize, EditHit)> {
    cot.steps
        .iter()
        .enumerate()
        .find_map(|(i, step)| index.retrieve(memory, step, min_score, exclude).map(|hit| (i, hit)))
}

/// The pipeline bound to a reasoner backend, an editor backend, and a
/// template library. Runs are self-contained; one engine may serve many
/// concurrent runs.
pub struct Engine<'a> {
    reasoner: &'a dyn LlmBackend,
    editor: &'a dyn LlmBackend,
    prompts: &'a PromptLibrary,
}

impl<'a> Engine<'a> {
    pub fn new(
        reasoner: &'a dyn LlmBackend,
        editor: &'a dyn LlmBackend,
        prompts: &'a PromptLibrary,
    ) -> Self {
        Engine { reasoner, editor, prompts }
    }

    fn complete(
        &self,
        backend: &dyn LlmBackend,
        id: TemplateId,
        binds: &std::collections::BTreeMap<String, String>,
        params: &DecodeParams,
    ) -> Result<String, EngineError> {
        let msgs = self
            .prompts
            .render(id, binds)
            .map_err(|source| EngineError::Prompt { template: id.file_stem(), source })?;
        backend
            .complete(&msgs, params)
            .map_err(|source| EngineError::Gateway { template: id.file_stem(), source })
    }

    /// Step 1a: ask the reasoner for a direct answer.
    pub fn initial_answer(&self, question: &str) -> Result<String, EngineError> {
        let text = self.complete(
            self.reasoner,
            TemplateId::DirectAnswer,
            &bindings([("question", question)]),
            &DecodeParams::for_answer(),
        )?;
        parse_answer(&text).map_err(|source| EngineError::Prompt {
            template: TemplateId::DirectAnswer.file_stem(),
            source,
        })
    }

    /// Step 1b: reconstruct a chain-of-thought from the question and answer.
    pub fn initial_cot(&self, question: &str, answer: &str) -> Result<ChainOfThought, EngineError> {
        let text = self.complete(
            self.reasoner,
            TemplateId::CotFromQA,
            &bindings([("question", question), ("answer", answer)]),
            &DecodeParams::for_cot(),
        )?;
        parse_cot(&text, ParseMode::Newline).map_err(|source| EngineError::Prompt {
            template: TemplateId::CotFromQA.file_stem(),
            source,
        })
    }

    /// Step 2b: classify the retrieved fact against the whole CoT.
    pub fn detect_conflict(
        &self,
        question: &str,
        cot: &ChainOfThought,
        fact_text: &str,
    ) -> Result<ConflictVerdict, EngineError> {
        let id = TemplateId::PipelineConflict;
        let msgs = self
            .prompts
            .render(
                id,
                &bindings([
                    ("question", question),
                    ("old_cot", &cot.joined()),
                    ("new_knowledge", fact_text),
                ]),
            )
            .map_err(|source| EngineError::Prompt { template: id.file_stem(), source })?;
        let distribution = self
            .reasoner
            .classify(&msgs, &CONFLICT_LABELS)
            .map_err(|source| EngineError::Gateway { template: id.file_stem(), source })?;
        Ok(ConflictVerdict { label: ConflictLabel::from_index(distribution.argmax), distribution })
    }

    /// Step 3: have the editor backend rewrite the CoT around the new fact.
    pub fn edit_cot(
        &self,
        question: &str,
        cot: &ChainOfThought,
        fact_text: &str,
    ) -> Result<ChainOfThought, EngineError> {
        let text = self.complete(
            self.editor,
            TemplateId::EditorEdit,
            &bindings([
                ("question", question),
                ("old_cot", &cot.joined()),
                ("new_knowledge", fact_text),
            ]),
            &DecodeParams::for_cot(),
        )?;
        parse_cot(&text, ParseMode::Newline).map_err(|source| EngineError::Prompt {
            template: TemplateId::EditorEdit.file_stem(),
            source,
        })
    }

    /// Step 4: answer from the final CoT.
    pub fn final_answer(&self, question: &str, cot: &ChainOfThought) -> Result<String, EngineError> {
        let text = self.complete(
            self.reasoner,
            TemplateId::FinalAnswer,
            &bindings([("question", question), ("new_cot", &cot.joined())]),
            &DecodeParams::for_answer(),
        )?;
        parse_answer(&text).map_err(|source| EngineError::Prompt {
            template: TemplateId::FinalAnswer.file_stem(),
            source,
        })
    }

    /// Execute the full pipeline for one question, recording every
    /// intermediate artifact. Any sub-operation error aborts the run with the
    /// partial trace attached. The memory and index are never mutated.
    pub fn run(
        &self,
        index: &RetrievalIndex,
        memory: &EditMemory,
        question: &str,
        config: &RunConfig,
    ) -> Result<PipelineTrace, Box<RunFailure>> {
        let mut iterations: Vec<IterationRecord> = Vec::new();
        let mut initial_answer: Option<String> = None;

        macro_rules! fail {
            ($stage:expr, $err:expr) => {
                return Err(Box::new(RunFailure {
                    error: $err,
                    partial: PartialTrace {
                        question: question.to_string(),
                        initial_answer: initial_answer.clone(),
                        iterations,
                        failed_stage: $stage.to_string(),
                    },
                }))
            };
        }

        if question.trim().is_empty() {
            fail!("validate", EngineError::EmptyQuestion);
        }
        if let Err(e) = config.validate() {
            fail!("validate", e);
        }

        let answer = match self.initial_answer(question) {
            Ok(a) => a,
            Err(e) => fail!("initial_answer", e),
        };
        initial_answer = Some(answer.clone());

        let mut cot = match self.initial_cot(question, &answer) {
            Ok(c) => c,
            Err(e) => fail!("initial_cot", e),
        };

        let mut applied: HashSet<String> = HashSet::new();
        let mut stop_reason: Option<StopReason> = None;

        for i in 1..=config.max_iterations {
            match find_fact(index, memory, &cot, config.min_retrieval_score, &applied) {
                None => {
                    iterations.push(IterationRecord {
                        cot_before: cot.clone(),
                        step_index_hit: None,
                        hit: None,
                        verdict: None,
                        cot_after: None,
                        stop_reason: Some(StopReason::NoRetrievalHit),
                    });
                    stop_reason = Some(StopReason::NoRetrievalHit);
                    break;
                }
                Some((step_index, hit)) => {
                    let mut record = IterationRecord {
                        cot_before: cot.clone(),
                        step_index_hit: Some(step_index),
                        hit: Some(hit.clone()),
                        verdict: None,
                        cot_after: None,
                        stop_reason: None,
                    };
                    let verdict = match self.detect_conflict(question, &cot, &hit.fact_text) {
                        Ok(v) => v,
                        Err(e) => {
                            iterations.push(record);
                            fail!("detect_conflict", e);
                        }
                    };
                    record.verdict = Some(verdict.clone());
                    if verdict.label != ConflictLabel::Contradict {
                        record.stop_reason = Some(StopReason::VerdictNotConflict);
                        iterations.push(record);
                        stop_reason = Some(StopReason::VerdictNotConflict);
                        break;
                    }
                    let new_cot = match self.edit_cot(question, &cot, &hit.fact_text) {
                        Ok(c) => c,
                        Err(e) => {
                            iterations.push(record);
                            fail!("edit_cot", e);
                        }
                    };
                    if config.exclude_applied_edits {
                        applied.insert(hit.record.id.clone());
                    }
                    record.cot_after = Some(new_cot.clone());
                    if i == config.max_iterations {
                        record.stop_reason = Some(StopReason::IterationLimit);
                        stop_reason = Some(StopReason::IterationLimit);
                    }
                    iterations.push(record);
                    cot = new_cot;
                }
            }
        }

        let stop_reason = stop_reason.expect("max_iterations >= 1 guarantees a stop reason");

        let final_answer = if config.final_answer_attends_new_cot {
            match self.final_answer(question, &cot) {
                Ok(a) => a,
                Err(e) => fail!("final_answer", e),
            }
        } else {
            // Ablation: answer without attending to the edited CoT.
            match self.initial_answer(question) {
                Ok(a) => a,
                Err(e) => fail!("final_answer", e),
            }
        };

        Ok(PipelineTrace {
            question: question.to_string(),
            initial_answer: answer,
            iterations,
            stop_reason,
            final_cot: cot,
            final_answer,
        })
    }
}
