//! Benchmark evaluation: metrics, batch pooling, and locality protocols.

pub mod adapter;

pub use adapter::{AdapterConfig, AnswerMatch, EvalDataset, MetricKind};

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::engine::{Engine, RunConfig, StopReason};
use crate::gateway::{DecodeParams, LlmBackend, Message, MessageSequence};
use crate::prompts::parse_answer;
use crate::store::{Bm25Params, EditMemory, EditRecord, MemoryLayout, RetrievalIndex};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("adapter error: {0}")]
    Adapter(String),
    #[error("invalid batch plan: {0}")]
    InvalidPlan(String),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// One benchmark instance: paraphrase questions, acceptable answers, and the
/// edits that belong to it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalInstance {
    pub id: String,
    pub questions: Vec<String>,
    pub gold_answers: Vec<String>,
    pub edits: Vec<EditRecord>,
    /// Option texts for multiple-choice datasets, in letter order (A, B, ...).
    #[serde(default)]
    pub options: Vec<String>,
}

/// Batch protocol: how many instances pool their edits into one shared
/// memory, with an optional seeded subsample of the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub sample: Option<usize>,
}

impl Default for BatchPlan {
    fn default() -> Self {
        BatchPlan { batch_size: 1, seed: 0, sample: None }
    }
}

/// Evaluation wiring mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Each run's memory is the pooled edits of its batch.
    Edited,
    /// Each run's own edits are withheld; memory holds only the other batch
    /// members' edits.
    LocalityHoldout,
}

/// What executes each question.
pub enum EvalRunner<'a> {
    Engine { engine: &'a Engine<'a>, config: &'a RunConfig },
    NaiveRag { reasoner: &'a dyn LlmBackend, k: usize },
}

/// Outcome of one question run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOutcome {
    pub question: String,
    pub prediction: String,
    pub correct: bool,
    pub iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceOutcome {
    pub id: String,
    pub runs: Vec<RunOutcome>,
    pub any_correct: bool,
}

/// Evaluation summary plus per-instance detail.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub mode: EvalMode,
    pub batch_size: usize,
    pub metric: MetricKind,
    pub aggregate: f64,
    pub instance_count: usize,
    pub run_count: usize,
    pub correct_instances: usize,
    pub correct_runs: usize,
    /// Mean trace length over successful engine runs; 0 for the baseline.
    pub mean_iterations: f64,
    pub wall_clock_secs: f64,
    pub instances: Vec<InstanceOutcome>,
}

impl EvalReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable summary table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "dataset           {}\nmode              {:?}\nbatch size        {}\nmetric            {:?}\n",
            self.dataset, self.mode, self.batch_size, self.metric
        ));
        out.push_str(&format!(
            "instances         {}\nruns              {}\ncorrect instances {}\ncorrect runs      {}\n",
            self.instance_count, self.run_count, self.correct_instances, self.correct_runs
        ));
        out.push_str(&format!(
            "mean iterations   {:.2}\nwall clock        {:.2}s\naggregate         {:.4}\n",
            self.mean_iterations, self.wall_clock_secs, self.aggregate
        ));
        out
    }
}

/// Exact-match normalization: lowercase, strip punctuation, collapse
/// whitespace, drop standalone English articles.
pub fn normalize(text: &str) -> String {
    let mut cleaned = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_alphanumeric() {
            cleaned.extend(c.to_lowercase());
        } else if c.is_whitespace() {
            cleaned.push(' ');
        }
        // Punctuation and symbols are dropped.
    }
    cleaned
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// True iff the normalized prediction equals some normalized gold answer.
pub fn exact_match(prediction: &str, gold_answers: &[String]) -> bool {
    let p = normalize(prediction);
    gold_answers.iter().any(|g| normalize(g) == p)
}

/// Fraction of instances with at least one correct outcome. An instance with
/// no outcomes counts as incorrect; an empty outcome list yields 0.
pub fn multihop_accuracy(outcomes: &[Vec<bool>]) -> f64 {
    if outcomes.is_empty() {
        return 0.0;
    }
    let hits = outcomes.iter().filter(|o| o.iter().any(|&b| b)).count();
    hits as f64 / outcomes.len() as f64
}

/// Answer the question from the top-k post-edit facts concatenated above it
/// in a single user turn — the in-repo RAG baseline.
pub fn naive_rag_answer(
    reasoner: &dyn LlmBackend,
    index: &RetrievalIndex,
    memory: &EditMemory,
    question: &str,
    k: usize,
) -> Result<String, String> {
    let ranked = index.rank(question, 0.0);
    let facts: Vec<String> = ranked
        .iter()
        .take(k)
        .filter_map(|(id, _)| memory.get(id).map(|r| r.post_edit.clone()))
        .collect();
    let content = if facts.is_empty() {
        format!("Question: {question}\nAnswer:")
    } else {
        format!("{}\n\nQuestion: {question}\nAnswer:", facts.join("\n"))
    };
    let msgs = MessageSequence::new(vec![Message::user(content)]);
    let text = reasoner
        .complete(&msgs, &DecodeParams::for_answer())
        .map_err(|e| e.to_string())?;
    parse_answer(&text).map_err(|e| e.to_string())
}

/// xorshift64* — a tiny deterministic shuffler for seeded sampling, so the
/// library core stays free of RNG dependencies.
fn shuffle<T>(items: &mut [T], seed: u64) {
    let mut state = seed.wrapping_mul(2685821657736338717).max(1);
    let mut next = || {
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        state.wrapping_mul(2685821657736338717)
    };
    for i in (1..items.len()).rev() {
        let j = (next() % (i as u64 + 1)) as usize;
        items.swap(i, j);
    }
}

fn match_prediction(prediction: &str, instance: &EvalInstance, mode: AnswerMatch) -> bool {
    match mode {
        AnswerMatch::Text => exact_match(prediction, &instance.gold_answers),
        AnswerMatch::OptionLetter => exact_match(prediction, &instance.gold_answers),
        AnswerMatch::OptionText => {
            // Golds are option letters; accept the letter or the option text.
            if exact_match(prediction, &instance.gold_answers) {
                return true;
            }
            instance.gold_answers.iter().any(|gold| {
                letter_index(gold)
                    .and_then(|i| instance.options.get(i))
                    .is_some_and(|text| normalize(prediction) == normalize(text))
            })
        }
    }
}

fn letter_index(letter: &str) -> Option<usize> {
    let c = letter.trim().chars().next()?;
    let c = c.to_ascii_uppercase();
    c.is_ascii_uppercase().then(|| (c as u8 - b'A') as usize)
}

fn pooled_memory(
    instances: &[&EvalInstance],
    layout: MemoryLayout,
    withhold: Option<&str>,
) -> Result<EditMemory, EvalError> {
    let records = instances
        .iter()
        .filter(|inst| Some(inst.id.as_str()) != withhold)
        .flat_map(|inst| inst.edits.iter())
        .map(|r| (Some(r.id.clone()), r.pre_edit.clone(), r.post_edit.clone(), r.tags.clone()))
        .collect();
    Ok(EditMemory::from_records(records, layout)?)
}

fn run_instance(
    runner: &EvalRunner<'_>,
    dataset: &EvalDataset,
    instance: &EvalInstance,
    memory: &EditMemory,
    index: &RetrievalIndex,
) -> InstanceOutcome {
    let mut runs = Vec::with_capacity(instance.questions.len());
    for question in &instance.questions {
        let outcome = match runner {
            EvalRunner::Engine { engine, config } => {
                match engine.run(index, memory, question, config) {
                    Ok(trace) => {
                        let correct =
                            match_prediction(&trace.final_answer, instance, dataset.answer_match);
                        RunOutcome {
                            question: question.clone(),
                            prediction: trace.final_answer,
                            correct,
                            iterations: trace.iterations.len(),
                            stop_reason: Some(trace.stop_reason),
                            error: None,
                        }
                    }
                    Err(failure) => RunOutcome {
                        question: question.clone(),
                        prediction: String::new(),
                        correct: false,
                        iterations: failure.partial.iterations.len(),
                        stop_reason: None,
                        error: Some(failure.to_string()),
                    },
                }
            }
            EvalRunner::NaiveRag { reasoner, k } => {
                match naive_rag_answer(*reasoner, index, memory, question, *k) {
                    Ok(prediction) => {
                        let correct = match_prediction(&prediction, instance, dataset.answer_match);
                        RunOutcome {
                            question: question.clone(),
                            prediction,
                            correct,
                            iterations: 0,
                            stop_reason: None,
                            error: None,
                        }
                    }
                    Err(e) => RunOutcome {
                        question: question.clone(),
                        prediction: String::new(),
                        correct: false,
                        iterations: 0,
                        stop_reason: None,
                        error: Some(e),
                    },
                }
            }
        };
        runs.push(outcome);
    }
    let any_correct = runs.iter().any(|r| r.correct);
    InstanceOutcome { id: instance.id.clone(), runs, any_correct }
}

/// Drive the runner over the dataset under the batch protocol.
///
/// Instances are partitioned into batches of `plan.batch_size`; each batch
/// pools its members' edits into one shared memory. In
/// [`EvalMode::LocalityHoldout`] each run's memory withholds the run's own
/// edits. `parallel` bounds concurrent instance runs within a batch.
pub fn run_eval(
    dataset: &EvalDataset,
    runner: &EvalRunner<'_>,
    plan: &BatchPlan,
    mode: EvalMode,
    parallel: usize,
) -> Result<EvalReport, EvalError> {
    let started = Instant::now();
    let mut selected: Vec<&EvalInstance> = dataset.instances.iter().collect();
    if let Some(n) = plan.sample {
        if n == 0 || n > selected.len() {
            return Err(EvalError::InvalidPlan(format!(
                "sample {n} out of range 1..={}",
                selected.len()
            )));
        }
        shuffle(&mut selected, plan.seed);
        selected.truncate(n);
    }
    if selected.is_empty() {
        return Err(EvalError::InvalidPlan("dataset has no instances".into()));
    }
    if plan.batch_size < 1 || plan.batch_size > selected.len() {
        return Err(EvalError::InvalidPlan(format!(
            "batch_size {} out of range 1..={}",
            plan.batch_size,
            selected.len()
        )));
    }

    let parallel = parallel.max(1);
    let mut outcomes: Vec<InstanceOutcome> = Vec::with_capacity(selected.len());

    for batch in selected.chunks(plan.batch_size) {
        let pooled = pooled_memory(batch, dataset.layout, None)?;
        let pooled_index = RetrievalIndex::build(&pooled, Bm25Params::default());

        let slots: Mutex<Vec<Option<InstanceOutcome>>> = Mutex::new(vec![None; batch.len()]);
        let cursor = AtomicUsize::new(0);
        let worker = || -> Result<(), EvalError> {
            loop {
                let i = cursor.fetch_add(1, Ordering::SeqCst);
                if i >= batch.len() {
                    return Ok(());
                }
                let instance = batch[i];
                let outcome = match mode {
                    EvalMode::Edited => {
                        run_instance(runner, dataset, instance, &pooled, &pooled_index)
                    }
                    EvalMode::LocalityHoldout => {
                        let held = pooled_memory(batch, dataset.layout, Some(&instance.id))?;
                        let own: HashSet<&str> =
                            instance.edits.iter().map(|e| e.id.as_str()).collect();
                        debug_assert!(held.records().iter().all(|r| !own.contains(r.id.as_str())));
                        if held.records().iter().any(|r| own.contains(r.id.as_str())) {
                            return Err(EvalError::Dataset(format!(
                                "locality holdout leaked an edit of instance {}",
                                instance.id
                            )));
                        }
                        let index = RetrievalIndex::build(&held, Bm25Params::default());
                        run_instance(runner, dataset, instance, &held, &index)
                    }
                };
                slots.lock().unwrap()[i] = Some(outcome);
            }
        };

        if parallel == 1 || batch.len() == 1 {
            worker()?;
        } else {
            std::thread::scope(|scope| -> Result<(), EvalError> {
                let handles: Vec<_> = (0..parallel.min(batch.len()))
                    .map(|_| scope.spawn(worker))
                    .collect();
                for h in handles {
                    h.join().expect("eval worker panicked")?;
                }
                Ok(())
            })?;
        }

        outcomes.extend(slots.into_inner().unwrap().into_iter().map(|o| o.expect("slot filled")));
    }

    let run_count: usize = outcomes.iter().map(|o| o.runs.len()).sum();
    let correct_runs: usize =
        outcomes.iter().map(|o| o.runs.iter().filter(|r| r.correct).count()).sum();
    let correct_instances = outcomes.iter().filter(|o| o.any_correct).count();
    let engine_runs: Vec<usize> = outcomes
        .iter()
        .flat_map(|o| o.runs.iter())
        .filter(|r| r.error.is_none() && r.stop_reason.is_some())
        .map(|r| r.iterations)
        .collect();
    let mean_iterations = if engine_runs.is_empty() {
        0.0
    } else {
        engine_runs.iter().sum::<usize>() as f64 / engine_runs.len() as f64
    };
    let aggregate = match dataset.metric {
        MetricKind::Multihop => {
            let per_instance: Vec<Vec<bool>> = outcomes
                .iter()
                .map(|o| o.runs.iter().map(|r| r.correct).collect())
                .collect();
            multihop_accuracy(&per_instance)
        }
        MetricKind::PerQuestion => {
            if run_count == 0 {
                0.0
            } else {
                correct_runs as f64 / run_count as f64
            }
        }
    };

    Ok(EvalReport {
        dataset: dataset.name.clone(),
        mode,
        batch_size: plan.batch_size,
        metric: dataset.metric,
        aggregate,
        instance_count: outcomes.len(),
        run_count,
        correct_instances,
        correct_runs,
        mean_iterations,
        wall_clock_secs: started.elapsed().as_secs_f64(),
        instances: outcomes,
    })
}
