//! Scripted pipeline scenarios.
//!
//! One scenario definition feeds both execution routes: the scripted
//! backends the engine talks to, and the callback tables the transcribed
//! pseudocode oracle consumes. Matchers key on each template's final
//! assistant cue plus scenario-specific markers chosen not to collide with
//! few-shot exemplar text.

use std::collections::HashSet;

use editcot::engine::{Engine, PipelineTrace, RunConfig, StopReason};
use editcot::gateway::{Matcher, MessageSequence, ScriptedBackend};
use editcot::prompts::{Locale, PromptLibrary};
use editcot::store::{Bm25Params, EditMemory, MemoryLayout, RetrievalIndex};

use super::algo_oracle::{oracle_run, Event, OracleStop};
use super::bm25_oracle::oracle_retrieve;

pub const CONFLICT: [(&str, f64); 3] = [("Contradict", 0.8), ("Support", 0.1), ("Unrelated", 0.1)];
pub const SUPPORT: [(&str, f64); 3] = [("Contradict", 0.05), ("Support", 0.9), ("Unrelated", 0.05)];
pub const UNRELATED: [(&str, f64); 3] = [("Contradict", 0.1), ("Support", 0.2), ("Unrelated", 0.7)];

#[derive(Clone)]
pub struct VerdictEntry {
    pub fact: String,
    /// Distinctive CoT phrase; `None` matches any CoT.
    pub cot_marker: Option<String>,
    pub table: Vec<(String, f64)>,
}

#[derive(Clone)]
pub struct EditEntry {
    pub fact: String,
    pub cot_marker: Option<String>,
    pub new_steps: Vec<String>,
}

#[derive(Clone)]
pub struct FinalEntry {
    pub cot_marker: String,
    pub answer: String,
}

#[derive(Clone)]
pub struct Scenario {
    pub name: &'static str,
    pub question: String,
    /// (id, pre_edit, post_edit)
    pub records: Vec<(String, Option<String>, String)>,
    pub layout: MemoryLayout,
    pub config: RunConfig,
    pub initial_answer: String,
    pub initial_cot: Vec<String>,
    pub verdicts: Vec<VerdictEntry>,
    pub edits: Vec<EditEntry>,
    pub finals: Vec<FinalEntry>,
    pub expect_stop: StopReason,
    pub expect_edits: usize,
    pub expect_final_answer: String,
}

fn verdict(fact: &str, marker: Option<&str>, table: [(&str, f64); 3]) -> VerdictEntry {
    VerdictEntry {
        fact: fact.to_string(),
        cot_marker: marker.map(str::to_owned),
        table: table.iter().map(|(l, p)| (l.to_string(), *p)).collect(),
    }
}

fn edit(fact: &str, marker: Option<&str>, steps: &[&str]) -> EditEntry {
    EditEntry {
        fact: fact.to_string(),
        cot_marker: marker.map(str::to_owned),
        new_steps: steps.iter().map(|s| s.to_string()).collect(),
    }
}

fn fin(marker: &str, answer: &str) -> FinalEntry {
    FinalEntry { cot_marker: marker.to_string(), answer: answer.to_string() }
}

impl Scenario {
    pub fn memory(&self) -> EditMemory {
        EditMemory::from_records(
            self.records
                .iter()
                .map(|(id, pre, post)| (Some(id.clone()), pre.clone(), post.clone(), vec![]))
                .collect(),
            self.layout,
        )
        .expect("scenario memory is well-formed")
    }

    /// Search-side texts, as the independent oracle sees them.
    pub fn search_docs(&self) -> Vec<(String, String)> {
        self.records
            .iter()
            .map(|(id, pre, post)| {
                let text = match self.layout {
                    MemoryLayout::PairedPrePost => pre.clone().expect("paired has pre"),
                    MemoryLayout::PostOnly => post.clone(),
                };
                (id.clone(), text)
            })
            .collect()
    }

    fn post_of(&self, record_id: &str) -> String {
        self.records
            .iter()
            .find(|(id, _, _)| id == record_id)
            .map(|(_, _, post)| post.clone())
            .expect("record exists")
    }

    /// Build scripted reasoner and editor backends from the tables.
    pub fn backends(&self) -> (ScriptedBackend, ScriptedBackend) {
        let reasoner = ScriptedBackend::new(format!("{}-reasoner", self.name));
        let editor = ScriptedBackend::new(format!("{}-editor", self.name));

        reasoner.register_text(
            Matcher::LastEquals("Answer:".into()),
            format!("Answer: {}", self.initial_answer),
        );
        reasoner.register_text(
            Matcher::LastEquals("Thoughts:".into()),
            format!("Thoughts: {}", self.initial_cot.join("\n")),
        );
        for entry in &self.verdicts {
            // Trailing newline pins the full fact line, so one fact being a
            // prefix of another cannot cross-fire.
            let fact_line = format!("New knowledge: {}\n", entry.fact);
            let marker = entry.cot_marker.clone();
            let cue = "Relevance of knowledge and chain-of-thought:";
            reasoner.register_labels(
                Matcher::Predicate(Box::new(move |msgs: &MessageSequence| {
                    let flat = msgs.flattened();
                    msgs.last_content() == Some(cue)
                        && flat.contains(&fact_line)
                        && marker.as_deref().is_none_or(|m| flat.contains(m))
                })),
                entry.table.iter().map(|(l, p)| (l.clone(), *p)),
            );
        }
        for entry in &self.edits {
            let fact_line = format!("New knowledge: {}\n", entry.fact);
            let marker = entry.cot_marker.clone();
            editor.register_text(
                Matcher::Predicate(Box::new(move |msgs: &MessageSequence| {
                    let flat = msgs.flattened();
                    msgs.last_content() == Some("New Thoughts:")
                        && flat.contains(&fact_line)
                        && marker.as_deref().is_none_or(|m| flat.contains(m))
                })),
                format!("New Thoughts: {}", entry.new_steps.join("\n")),
            );
        }
        for entry in &self.finals {
            let marker = entry.cot_marker.clone();
            reasoner.register_text(
                Matcher::Predicate(Box::new(move |msgs: &MessageSequence| {
                    msgs.last_content() == Some("Answer from [New Thoughts]:")
                        && msgs.flattened().contains(&marker)
                })),
                format!("Answer from [New Thoughts]: {}", entry.answer),
            );
        }
        (reasoner, editor)
    }

    /// Run the real engine over the scripted backends.
    pub fn run_engine(&self, lib: &PromptLibrary) -> PipelineTrace {
        let memory = self.memory();
        let index = RetrievalIndex::build(&memory, Bm25Params::default());
        let (reasoner, editor) = self.backends();
        let engine = Engine::new(&reasoner, &editor, lib);
        engine
            .run(&index, &memory, &self.question, &self.config)
            .unwrap_or_else(|e| panic!("scenario {} failed: {e}", self.name))
    }

    /// Run the transcribed pseudocode oracle over the same tables, with
    /// retrieval served by the brute-force BM25 oracle.
    pub fn run_oracle(&self) -> (Vec<Event>, OracleStop, Vec<String>) {
        let docs = self.search_docs();
        let params = Bm25Params::default();
        let min_score = self.config.min_retrieval_score;

        let retrieve = |step: &str, applied: &HashSet<String>| {
            oracle_retrieve(&docs, params.k1, params.b, step, min_score, applied)
                .map(|(id, _)| (id.clone(), self.post_of(&id)))
        };
        let verify = |cot: &[String], fact: &str| {
            let joined = cot.join("\n");
            let entry = self
                .verdicts
                .iter()
                .find(|e| e.fact == fact && e.cot_marker.as_deref().is_none_or(|m| joined.contains(m)))
                .unwrap_or_else(|| panic!("scenario {}: no verdict for fact {fact:?}", self.name));
            // Independent argmax over the fixed label order, earlier label
            // wins ties.
            let mut best = ("Contradict", f64::MIN);
            for label in ["Contradict", "Support", "Unrelated"] {
                let p = entry.table.iter().find(|(l, _)| l == label).map(|(_, p)| *p).unwrap_or(0.0);
                if p > best.1 {
                    best = (label, p);
                }
            }
            best.0.to_string()
        };
        let edit = |cot: &[String], fact: &str| {
            let joined = cot.join("\n");
            self.edits
                .iter()
                .find(|e| e.fact == fact && e.cot_marker.as_deref().is_none_or(|m| joined.contains(m)))
                .unwrap_or_else(|| panic!("scenario {}: no edit for fact {fact:?}", self.name))
                .new_steps
                .clone()
        };

        oracle_run(
            self.config.max_iterations,
            &self.initial_cot,
            self.config.exclude_applied_edits,
            retrieve,
            verify,
            edit,
        )
    }
}

/// Flatten a trace into the oracle's event vocabulary.
pub fn trace_events(trace: &PipelineTrace) -> Vec<Event> {
    let mut events = Vec::new();
    for it in &trace.iterations {
        match (&it.hit, it.step_index_hit) {
            (Some(hit), Some(step)) => {
                events.push(Event::Hit {
                    step,
                    record_id: hit.record.id.clone(),
                    fact: hit.fact_text.clone(),
                });
            }
            _ => events.push(Event::NoHit),
        }
        if let Some(v) = &it.verdict {
            events.push(Event::Verdict(format!("{:?}", v.label)));
        }
        if let Some(c) = &it.cot_after {
            events.push(Event::Edit(c.steps.clone()));
        }
    }
    events
}

pub fn stop_matches(engine: StopReason, oracle: OracleStop) -> bool {
    matches!(
        (engine, oracle),
        (StopReason::NoRetrievalHit, OracleStop::NoRetrievalHit)
            | (StopReason::VerdictNotConflict, OracleStop::VerdictNotConflict)
            | (StopReason::IterationLimit, OracleStop::IterationLimit)
    )
}

/// Run both routes and check event-for-event equality plus the structural
/// trace invariants. Returns the engine trace.
pub fn assert_equivalence(scenario: &Scenario, lib: &PromptLibrary) -> PipelineTrace {
    let trace = scenario.run_engine(lib);
    let (oracle_events, oracle_stop, oracle_cot) = scenario.run_oracle();

    let engine_events = trace_events(&trace);
    assert_eq!(
        engine_events, oracle_events,
        "scenario {}: engine events diverge from pseudocode oracle",
        scenario.name
    );
    assert!(
        stop_matches(trace.stop_reason, oracle_stop),
        "scenario {}: stop reason {:?} vs oracle {:?}",
        scenario.name,
        trace.stop_reason,
        oracle_stop
    );
    assert_eq!(trace.final_cot.steps, oracle_cot, "scenario {}: final CoT diverges", scenario.name);

    // Structural trace invariants.
    assert!(trace.iterations.len() <= scenario.config.max_iterations as usize);
    for (i, it) in trace.iterations.iter().enumerate() {
        let last = i + 1 == trace.iterations.len();
        assert_eq!(it.stop_reason.is_some(), last, "stop reason only on the last iteration");
        let contradicted = it
            .verdict
            .as_ref()
            .is_some_and(|v| v.label == editcot::engine::ConflictLabel::Contradict);
        assert_eq!(it.cot_after.is_some(), contradicted, "edit gating in scenario {}", scenario.name);
    }
    trace
}

/// [`assert_equivalence`] plus the scenario's stated expectations.
pub fn assert_scenario(scenario: &Scenario, lib: &PromptLibrary) -> PipelineTrace {
    let trace = assert_equivalence(scenario, lib);
    assert_eq!(trace.stop_reason, scenario.expect_stop, "scenario {}", scenario.name);
    assert_eq!(trace.edits_applied(), scenario.expect_edits, "scenario {}", scenario.name);
    assert_eq!(trace.final_answer, scenario.expect_final_answer, "scenario {}", scenario.name);
    trace
}

const FARRELL_PRE: &str = "John Farrell is employed by Boston Red Sox";
const FARRELL_POST: &str = "John Farrell is employed by FC Groningen";
const AGOVV_PRE: &str = "AGOVV Apeldoorn is associated with the sport of association football";
const AGOVV_POST: &str = "AGOVV Apeldoorn is associated with the sport of baseball";

pub const FARRELL_QUESTION: &str = "What sport is associated with the employer of John Farrell?";

pub fn farrell_initial_cot() -> Vec<String> {
    vec![
        "John Farrell is the manager of the Boston Red Sox.".to_string(),
        "The Boston Red Sox is a team in the sport of Baseball.".to_string(),
    ]
}

pub fn farrell_edited_cot() -> Vec<String> {
    vec![
        "John Farrell is the manager of the FC Groningen.".to_string(),
        "FC Groningen is associated with the sport of association football.".to_string(),
    ]
}

pub fn agovv_bad_cot() -> Vec<String> {
    vec![
        "John Farrell is the manager of AGOVV Apeldoorn.".to_string(),
        "The AGOVV Apeldoorn is a team in the sport of baseball.".to_string(),
    ]
}

fn farrell_records_with_distractor() -> Vec<(String, Option<String>, String)> {
    vec![
        ("mq-agovv".into(), Some(AGOVV_PRE.into()), AGOVV_POST.into()),
        ("mq-farrell".into(), Some(FARRELL_PRE.into()), FARRELL_POST.into()),
    ]
}

/// Faithful-mode regression: the first edit is correct, then a spurious
/// retrieval hit plus a mistaken conflict verdict trigger a second, wrong
/// edit. The retrieval threshold separates the intended hits (scores ~3.8
/// and ~4.8) from the weaker lexical cross-matches (~2.2) on the first step
/// of the edited CoT.
fn farrell_spurious_second_edit() -> Scenario {
    Scenario {
        name: "farrell_spurious_second_edit",
        question: FARRELL_QUESTION.into(),
        records: farrell_records_with_distractor(),
        layout: MemoryLayout::PairedPrePost,
        config: RunConfig {
            max_iterations: 2,
            min_retrieval_score: 3.0,
            exclude_applied_edits: false,
            ..Default::default()
        },
        initial_answer: "Baseball".into(),
        initial_cot: farrell_initial_cot(),
        verdicts: vec![
            verdict(FARRELL_POST, Some("Boston Red Sox"), CONFLICT),
            verdict(AGOVV_POST, Some("manager of the FC Groningen"), CONFLICT),
        ],
        edits: vec![
            edit(FARRELL_POST, Some("Boston Red Sox"), &[
                "John Farrell is the manager of the FC Groningen.",
                "FC Groningen is associated with the sport of association football.",
            ]),
            edit(AGOVV_POST, Some("manager of the FC Groningen"), &[
                "John Farrell is the manager of AGOVV Apeldoorn.",
                "The AGOVV Apeldoorn is a team in the sport of baseball.",
            ]),
        ],
        finals: vec![fin("AGOVV Apeldoorn is a team in the sport of baseball", "Baseball")],
        expect_stop: StopReason::IterationLimit,
        expect_edits: 2,
        expect_final_answer: "Baseball".into(),
    }
}

/// No-retrieval regression: the reasoning path never mentions the edited
/// subject. BM25 still shares the token "football" with the stored edit, so
/// the threshold sits above that weak overlap and the run stops with the
/// original CoT intact.
fn nafta_retrieval_miss() -> Scenario {
    Scenario {
        name: "nafta_retrieval_miss",
        question: "Which country or location is the origin of the sport associated with NK Nafta Lendava?".into(),
        records: vec![(
            "mq-nafta".into(),
            Some("association football was created in England".into()),
            "association football was created in Hong Kong".into(),
        )],
        layout: MemoryLayout::PairedPrePost,
        config: RunConfig {
            min_retrieval_score: 0.5,
            exclude_applied_edits: false,
            ..Default::default()
        },
        initial_answer: "Slovenia".into(),
        initial_cot: vec![
            "NK Nafta Lendava is a football club.".into(),
            "The sport associated with NK Nafta Lendava is football (soccer).".into(),
            "The country where NK Nafta Lendava is located is Slovenia.".into(),
        ],
        verdicts: vec![],
        edits: vec![],
        finals: vec![fin("NK Nafta Lendava is located is Slovenia", "Slovenia")],
        expect_stop: StopReason::NoRetrievalHit,
        expect_edits: 0,
        expect_final_answer: "Slovenia".into(),
    }
}

fn support_stop() -> Scenario {
    Scenario {
        name: "support_stop",
        question: "Who is the spouse of the performer of the song \"Don't Be Cruel\"?".into(),
        records: vec![(
            "e1".into(),
            None,
            "Don't Be Cruel was performed by Elvis Presley".into(),
        )],
        layout: MemoryLayout::PostOnly,
        config: RunConfig::default(),
        initial_answer: "Priscilla Presley".into(),
        initial_cot: vec![
            "Don't Be Cruel was performed by Elvis Presley.".into(),
            "Elvis Presley is married to Priscilla Presley.".into(),
        ],
        verdicts: vec![verdict("Don't Be Cruel was performed by Elvis Presley", None, SUPPORT)],
        edits: vec![],
        finals: vec![fin("married to Priscilla Presley", "Priscilla Presley")],
        expect_stop: StopReason::VerdictNotConflict,
        expect_edits: 0,
        expect_final_answer: "Priscilla Presley".into(),
    }
}

fn unrelated_stop() -> Scenario {
    Scenario {
        name: "unrelated_stop",
        question: "Which country is the author of \"Moneyball\" a citizen of?".into(),
        records: vec![(
            "e1".into(),
            None,
            "The author of Our Mutual Friend is Charles Dickens".into(),
        )],
        layout: MemoryLayout::PostOnly,
        config: RunConfig::default(),
        initial_answer: "United States of America".into(),
        initial_cot: vec![
            "The author of Moneyball is Michael Lewis.".into(),
            "Michael Lewis is a citizen of United States of America.".into(),
        ],
        verdicts: vec![verdict("The author of Our Mutual Friend is Charles Dickens", None, UNRELATED)],
        edits: vec![],
        finals: vec![fin("citizen of United States of America", "United States of America")],
        expect_stop: StopReason::VerdictNotConflict,
        expect_edits: 0,
        expect_final_answer: "United States of America".into(),
    }
}

fn chained_records() -> Vec<(String, Option<String>, String)> {
    vec![
        ("r1".into(), None, "alpha item red".into()),
        ("r2".into(), None, "beta item blue".into()),
        ("r3".into(), None, "gamma item green".into()),
    ]
}

fn chained_tables() -> (Vec<VerdictEntry>, Vec<EditEntry>, Vec<FinalEntry>) {
    let verdicts = vec![
        verdict("alpha item red", None, CONFLICT),
        verdict("beta item blue", None, CONFLICT),
        verdict("gamma item green", None, CONFLICT),
    ];
    let edits = vec![
        edit("alpha item red", None, &["The blue beta item is shiny."]),
        edit("beta item blue", None, &["The green gamma item is shiny."]),
        edit("gamma item green", None, &["The purple delta item is shiny."]),
    ];
    let finals = vec![fin("purple delta item", "shiny purple")];
    (verdicts, edits, finals)
}

/// Exactly N iterations, each ending in an applied edit.
fn iteration_limit_three_edits() -> Scenario {
    let (verdicts, edits, finals) = chained_tables();
    Scenario {
        name: "iteration_limit_three_edits",
        question: "What is the item like?".into(),
        records: chained_records(),
        layout: MemoryLayout::PostOnly,
        config: RunConfig { max_iterations: 3, ..Default::default() },
        initial_answer: "shiny red".into(),
        initial_cot: vec!["The red alpha item is shiny.".into()],
        verdicts,
        edits,
        finals,
        expect_stop: StopReason::IterationLimit,
        expect_edits: 3,
        expect_final_answer: "shiny purple".into(),
    }
}

/// Three edits then a terminating no-hit check: four iterations total.
pub fn three_edits_then_stop() -> Scenario {
    let (verdicts, edits, finals) = chained_tables();
    Scenario {
        name: "three_edits_then_stop",
        question: "What is the item like?".into(),
        records: chained_records(),
        layout: MemoryLayout::PostOnly,
        config: RunConfig { max_iterations: 4, ..Default::default() },
        initial_answer: "shiny red".into(),
        initial_cot: vec!["The red alpha item is shiny.".into()],
        verdicts,
        edits,
        finals,
        expect_stop: StopReason::NoRetrievalHit,
        expect_edits: 3,
        expect_final_answer: "shiny purple".into(),
    }
}

/// Single-instance wiring: one edit applied, then exclusion leaves nothing
/// to retrieve.
fn farrell_single_clean() -> Scenario {
    Scenario {
        name: "farrell_single_clean",
        question: FARRELL_QUESTION.into(),
        records: vec![("mq-farrell".into(), Some(FARRELL_PRE.into()), FARRELL_POST.into())],
        layout: MemoryLayout::PairedPrePost,
        config: RunConfig::default(),
        initial_answer: "Baseball".into(),
        initial_cot: farrell_initial_cot(),
        verdicts: vec![verdict(FARRELL_POST, Some("Boston Red Sox"), CONFLICT)],
        edits: vec![edit(FARRELL_POST, Some("Boston Red Sox"), &[
            "John Farrell is the manager of the FC Groningen.",
            "FC Groningen is associated with the sport of association football.",
        ])],
        finals: vec![fin("associated with the sport of association football", "association football")],
        expect_stop: StopReason::NoRetrievalHit,
        expect_edits: 1,
        expect_final_answer: "association football".into(),
    }
}

/// Faithful mode re-retrieves the already-applied edit; the verdict against
/// the rewritten CoT is Support, stopping the loop.
fn farrell_faithful_support() -> Scenario {
    Scenario {
        name: "farrell_faithful_support",
        question: FARRELL_QUESTION.into(),
        records: vec![("mq-farrell".into(), Some(FARRELL_PRE.into()), FARRELL_POST.into())],
        layout: MemoryLayout::PairedPrePost,
        config: RunConfig { exclude_applied_edits: false, ..Default::default() },
        initial_answer: "Baseball".into(),
        initial_cot: farrell_initial_cot(),
        verdicts: vec![
            verdict(FARRELL_POST, Some("Boston Red Sox"), CONFLICT),
            verdict(FARRELL_POST, Some("manager of the FC Groningen"), SUPPORT),
        ],
        edits: vec![edit(FARRELL_POST, Some("Boston Red Sox"), &[
            "John Farrell is the manager of the FC Groningen.",
            "FC Groningen is associated with the sport of association football.",
        ])],
        finals: vec![fin("associated with the sport of association football", "association football")],
        expect_stop: StopReason::VerdictNotConflict,
        expect_edits: 1,
        expect_final_answer: "association football".into(),
    }
}

fn tie_break_lowest_id() -> Scenario {
    Scenario {
        name: "tie_break_lowest_id",
        question: "Which record wins the tie?".into(),
        records: vec![
            ("b".into(), None, "shared words here".into()),
            ("a".into(), None, "shared words here".into()),
        ],
        layout: MemoryLayout::PostOnly,
        config: RunConfig::default(),
        initial_answer: "unknown".into(),
        initial_cot: vec!["shared words here".into()],
        verdicts: vec![verdict("shared words here", None, SUPPORT)],
        edits: vec![],
        finals: vec![fin("shared words here", "unknown")],
        expect_stop: StopReason::VerdictNotConflict,
        expect_edits: 0,
        expect_final_answer: "unknown".into(),
    }
}

fn hit_at_second_step() -> Scenario {
    Scenario {
        name: "hit_at_second_step",
        question: "Where does the zebra fact live?".into(),
        records: vec![("z1".into(), None, "second step fact zebra".into())],
        layout: MemoryLayout::PostOnly,
        config: RunConfig::default(),
        initial_answer: "nowhere".into(),
        initial_cot: vec![
            "completely disjoint opening line".into(),
            "this step mentions zebra fact".into(),
        ],
        verdicts: vec![verdict("second step fact zebra", None, UNRELATED)],
        edits: vec![],
        finals: vec![fin("mentions zebra fact", "nowhere")],
        expect_stop: StopReason::VerdictNotConflict,
        expect_edits: 0,
        expect_final_answer: "nowhere".into(),
    }
}

fn empty_memory() -> Scenario {
    Scenario {
        name: "empty_memory",
        question: "Anything known about this?".into(),
        records: vec![],
        layout: MemoryLayout::PostOnly,
        config: RunConfig::default(),
        initial_answer: "a guess".into(),
        initial_cot: vec!["an unremarkable reasoning step".into()],
        verdicts: vec![],
        edits: vec![],
        finals: vec![fin("unremarkable reasoning step", "a guess")],
        expect_stop: StopReason::NoRetrievalHit,
        expect_edits: 0,
        expect_final_answer: "a guess".into(),
    }
}

/// The editor echoes the CoT unchanged; without exclusion the same edit is
/// re-applied until the iteration limit.
fn editor_echo_loop() -> Scenario {
    Scenario {
        name: "editor_echo_loop",
        question: "What does zulu refer to?".into(),
        records: vec![("z".into(), None, "echo fact zulu".into())],
        layout: MemoryLayout::PostOnly,
        config: RunConfig {
            max_iterations: 2,
            exclude_applied_edits: false,
            ..Default::default()
        },
        initial_answer: "zulu".into(),
        initial_cot: vec!["the step about zulu".into()],
        verdicts: vec![verdict("echo fact zulu", None, CONFLICT)],
        edits: vec![edit("echo fact zulu", None, &["the step about zulu"])],
        finals: vec![fin("the step about zulu", "zulu")],
        expect_stop: StopReason::IterationLimit,
        expect_edits: 2,
        expect_final_answer: "zulu".into(),
    }
}

/// Exclusion stops the re-retrieval loop the faithful mode falls into.
fn exclusion_breaks_echo_loop() -> Scenario {
    Scenario {
        name: "exclusion_breaks_echo_loop",
        question: "What does zulu refer to?".into(),
        records: vec![("z".into(), None, "echo fact zulu".into())],
        layout: MemoryLayout::PostOnly,
        config: RunConfig { max_iterations: 2, ..Default::default() },
        initial_answer: "zulu".into(),
        initial_cot: vec!["the step about zulu".into()],
        verdicts: vec![verdict("echo fact zulu", None, CONFLICT)],
        edits: vec![edit("echo fact zulu", None, &["the step about zulu"])],
        finals: vec![fin("the step about zulu", "zulu")],
        expect_stop: StopReason::NoRetrievalHit,
        expect_edits: 1,
        expect_final_answer: "zulu".into(),
    }
}

pub fn all_scenarios() -> Vec<Scenario> {
    vec![
        farrell_spurious_second_edit(),
        nafta_retrieval_miss(),
        support_stop(),
        unrelated_stop(),
        iteration_limit_three_edits(),
        three_edits_then_stop(),
        farrell_single_clean(),
        farrell_faithful_support(),
        tie_break_lowest_id(),
        hit_at_second_step(),
        empty_memory(),
        editor_echo_loop(),
        exclusion_breaks_echo_loop(),
    ]
}

pub fn english_library() -> PromptLibrary {
    PromptLibrary::builtin(Locale::En)
}

/// The faithful spurious-second-edit scenario, exposed for the golden trace
/// test and the acceptance suite's structural check.
pub fn farrell_faithful_scenario() -> Scenario {
    farrell_spurious_second_edit()
}

pub fn nafta_scenario() -> Scenario {
    nafta_retrieval_miss()
}
