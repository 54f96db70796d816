//! Brute-force BM25 scorer, written independently of the library.
//!
//! Same documented contract: lowercase tokens split on non-alphanumeric
//! runs with CJK codepoints as single tokens, Okapi idf with +1 inside the
//! log, query terms counted with multiplicity, ties to the lowest id.

use std::collections::HashSet;

/// Independent re-implementation of the tokenization rule.
pub fn oracle_tokenize(text: &str) -> Vec<String> {
    let mut tokens: Vec<String> = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        let cjk = matches!(c as u32,
            0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2A6DF);
        if c.is_alphanumeric() && !cjk {
            for lower in c.to_lowercase() {
                word.push(lower);
            }
        } else {
            if !word.is_empty() {
                tokens.push(word.clone());
                word.clear();
            }
            if cjk {
                tokens.push(c.to_string());
            }
        }
    }
    if !word.is_empty() {
        tokens.push(word);
    }
    tokens
}

/// Score one document against a query by recomputing every statistic from
/// the raw texts.
pub fn oracle_score(
    docs: &[(String, String)], // (id, search text)
    k1: f64,
    b: f64,
    doc_id: &str,
    query: &str,
) -> f64 {
    let n = docs.len() as f64;
    let tokenized: Vec<(&str, Vec<String>)> =
        docs.iter().map(|(id, text)| (id.as_str(), oracle_tokenize(text))).collect();
    let avg_len = if docs.is_empty() {
        0.0
    } else {
        tokenized.iter().map(|(_, t)| t.len() as f64).sum::<f64>() / n
    };
    let doc_tokens = &tokenized.iter().find(|(id, _)| *id == doc_id).expect("doc exists").1;
    let dl = doc_tokens.len() as f64;

    let mut score = 0.0;
    for term in oracle_tokenize(query) {
        let tf = doc_tokens.iter().filter(|t| **t == term).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let df = tokenized.iter().filter(|(_, toks)| toks.contains(&term)).count() as f64;
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avg_len));
    }
    score
}

/// Brute-force retrieval: score every non-excluded document, keep the best
/// strictly above `min_score`, break ties toward the lowest id.
pub fn oracle_retrieve(
    docs: &[(String, String)],
    k1: f64,
    b: f64,
    query: &str,
    min_score: f64,
    exclude: &HashSet<String>,
) -> Option<(String, f64)> {
    let mut best: Option<(String, f64)> = None;
    for (id, _) in docs {
        if exclude.contains(id) {
            continue;
        }
        let score = oracle_score(docs, k1, b, id, query);
        if score <= min_score {
            continue;
        }
        best = match best {
            None => Some((id.clone(), score)),
            Some((best_id, best_score)) => {
                if score > best_score || (score == best_score && *id < best_id) {
                    Some((id.clone(), score))
                } else {
                    Some((best_id, best_score))
                }
            }
        };
    }
    best
}
