//! The six-question scripted forge corpus with hand-enumerated gate
//! outcomes: q1 and q6 pass every gate, the other four each trip a
//! different rejection.

use editcot::forge::{ForgeConfig, SourceQuestion};
use editcot::gateway::{Matcher, ScriptedBackend};

pub struct ForgeFixture {
    pub questions: Vec<SourceQuestion>,
    pub backend: ScriptedBackend,
    pub config: ForgeConfig,
}

fn q(id: &str, question: &str) -> SourceQuestion {
    SourceQuestion { id: id.into(), question: question.into() }
}

/// Expected outcome: 2 accepted (q1, q6); 4 rejected — q2 answer_consistent,
/// q3 no_divergence, q4 step_not_conflicting, q5 quality_filtered.
pub fn build() -> ForgeFixture {
    let questions = vec![
        q("q1", "What is the capital of Fredonia?"),
        q("q2", "When was Delta Corp founded?"),
        q("q3", "Which river crosses Epsilon Valley?"),
        q("q4", "Who directed the film Heliograph?"),
        q("q5", "Which lake is the deepest in Zetaland?"),
        q("q6", "What metal is mined at Theta Ridge?"),
    ];

    let backend = ScriptedBackend::new("forge-fixture");

    // Every Part-I CoT has exactly one step, so k = 1 is the only candidate
    // and the prefix is just the guidance word.
    let rag = |question: &str, reply: &str| {
        backend.register_text(
            Matcher::contains_all(["You have access to background information", question]),
            reply.to_string(),
        );
    };
    let prefix = |question: &str, reply: &str| {
        backend.register_text(
            Matcher::contains_all(["Please answer the following question using a chain-of-thought", question]),
            reply.to_string(),
        );
    };
    let answers_gate = |a2: &str, table: [(&str, f64); 2]| {
        backend.register_labels(Matcher::contains_all(["Your choice", a2]), table);
    };
    let steps_gate = |s2: &str, table: [(&str, f64); 3]| {
        backend.register_labels(Matcher::contains_all(["Sentence 2:", s2]), table);
    };
    let rewrite = |step: &str, reply: &str| {
        backend.register_text(Matcher::contains_all(["Sentence:", step]), reply.to_string());
    };

    // q1: accepted.
    rag("capital of Fredonia", "[STEP] The capital of Fredonia is Alpha City. [ANSWER] Alpha City");
    prefix("capital of Fredonia", " capital of Fredonia is Beta City. [ANSWER] Beta City");
    answers_gate("Answer 2: Beta City", [("A", 0.3), ("B", 0.7)]);
    steps_gate("The capital of Fredonia is Beta City.", [("A", 0.8), ("B", 0.1), ("C", 0.1)]);
    rewrite("The capital of Fredonia is Alpha City.", "Alpha City is the capital of Fredonia.");

    // q2: answers judged consistent, just below the 0.6 threshold. The
    // completion continues after the seeded first word ("Delta").
    rag("Delta Corp", "[STEP] Delta Corp was founded in 1999. [ANSWER] 1999");
    prefix("Delta Corp", " Corp was founded around the millennium. [ANSWER] about 1999");
    answers_gate("Answer 2: about 1999", [("A", 0.41), ("B", 0.59)]);

    // q3: answers conflict but the regenerated CoT is byte-identical.
    rag("Epsilon Valley", "[STEP] The Epsilon flows through Epsilon Valley. [ANSWER] the Epsilon");
    prefix("Epsilon Valley", " Epsilon flows through Epsilon Valley. [ANSWER] the Epsilon River");
    answers_gate("Answer 2: the Epsilon River", [("A", 0.1), ("B", 0.9)]);

    // q4: diverging steps judged non-conflicting, just below threshold.
    rag("Heliograph", "[STEP] Heliograph was directed by Ada Quill. [ANSWER] Ada Quill");
    prefix("Heliograph", " was directed by Bo Marsh. [ANSWER] Bo Marsh");
    answers_gate("Answer 2: Bo Marsh", [("A", 0.05), ("B", 0.95)]);
    steps_gate("Heliograph was directed by Bo Marsh.", [("A", 0.59), ("B", 0.3), ("C", 0.11)]);

    // q5: passes both gates; the rewrite trips the quality filter.
    rag("Zetaland", "[STEP] Zeta Lake is the deepest lake in Zetaland. [ANSWER] Zeta Lake");
    prefix("Zetaland", " Lake is the second deepest in Zetaland. [ANSWER] Eta Lake");
    answers_gate("Answer 2: Eta Lake", [("A", 0.1), ("B", 0.9)]);
    steps_gate("Zeta Lake is the second deepest in Zetaland.", [("A", 0.9), ("B", 0.05), ("C", 0.05)]);
    rewrite(
        "Zeta Lake is the deepest lake in Zetaland.",
        "According to the context, Zeta Lake is the deepest lake in Zetaland.",
    );

    // q6: accepted, with both gates at exactly the inclusive 0.6 boundary.
    rag("Theta Ridge", "[STEP] Theta Ridge is mined for copper. [ANSWER] copper");
    prefix("Theta Ridge", " Ridge is mined for tin. [ANSWER] tin");
    answers_gate("Answer 2: tin", [("A", 0.4), ("B", 0.6)]);
    steps_gate("Theta Ridge is mined for tin.", [("A", 0.6), ("B", 0.2), ("C", 0.2)]);
    rewrite("Theta Ridge is mined for copper.", "Copper is mined at Theta Ridge.");

    ForgeFixture { questions, backend, config: ForgeConfig::default() }
}

/// Retriever stub: one fixed paragraph per question.
pub fn retriever(
    question: &SourceQuestion,
) -> Result<Vec<String>, editcot::forge::ForgeError> {
    Ok(vec![format!("Background paragraph for {}.", question.id)])
}
