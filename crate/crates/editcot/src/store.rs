//! Edit memory and lexical retrieval.
//!
//! Holds the set of knowledge edits, indexes the search side of each record
//! with Okapi BM25, and resolves a chain-of-thought step to the single most
//! relevant post-edit fact. Two memory layouts are supported: paired
//! pre/post-edit statements (search the pre-edit text, deliver the post-edit
//! text) and post-only (search and deliver the post-edit text).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Errors raised while loading, indexing, or querying an edit memory.
#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("malformed edit record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate edit id: {0}")]
    DuplicateId(String),
    #[error("unknown record id: {0}")]
    UnknownRecord(String),
    #[error("index does not match memory: {0}")]
    IndexMismatch(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// How the edit memory stores knowledge.
///
/// `PairedPrePost` keeps the outdated statement next to its replacement and
/// searches the outdated side; `PostOnly` stores and searches the new
/// statements directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryLayout {
    PairedPrePost,
    PostOnly,
}

impl fmt::Display for MemoryLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemoryLayout::PairedPrePost => write!(f, "paired_pre_post"),
            MemoryLayout::PostOnly => write!(f, "post_only"),
        }
    }
}

/// One knowledge edit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditRecord {
    pub id: String,
    /// The outdated statement. Present (and non-empty) under
    /// [`MemoryLayout::PairedPrePost`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pre_edit: Option<String>,
    /// The new statement delivered to the pipeline.
    pub post_edit: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

impl EditRecord {
    pub fn new(id: impl Into<String>, pre_edit: Option<&str>, post_edit: &str) -> Self {
        EditRecord {
            id: id.into(),
            pre_edit: pre_edit.map(str::to_owned),
            post_edit: post_edit.to_owned(),
            tags: Vec::new(),
        }
    }
}

/// JSONL line as it appears in an edit file; `id` may be absent.
#[derive(Debug, Deserialize)]
struct RawEditRecord {
    #[serde(default)]
    id: Option<String>,
    #[serde(default)]
    pre_edit: Option<String>,
    #[serde(default)]
    post_edit: Option<String>,
    #[serde(default)]
    tags: Option<Vec<String>>,
}

/// Input tuple for [`EditMemory::from_records`]:
/// (id, pre_edit, post_edit, tags).
pub type RecordFields = (Option<String>, Option<String>, String, Vec<String>);

/// The memory of edits. Immutable after construction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EditMemory {
    records: Vec<EditRecord>,
    layout: MemoryLayout,
}

impl EditMemory {
    /// Build a memory from records already in hand, validating invariants and
    /// assigning ids where absent.
    pub fn from_records(
        records: Vec<RecordFields>,
        layout: MemoryLayout,
    ) -> Result<Self, StoreError> {
        let raw = records
            .into_iter()
            .map(|(id, pre, post, tags)| RawEditRecord {
                id,
                pre_edit: pre,
                post_edit: Some(post),
                tags: Some(tags),
            })
            .collect();
        Self::assemble(raw, layout)
    }

    /// Load a memory from the JSONL edit format: one object per line with
    /// fields `id` (optional), `pre_edit` (optional), `post_edit`, `tags`
    /// (optional). Blank lines are skipped.
    pub fn load_path(path: impl AsRef<Path>, layout: MemoryLayout) -> Result<Self, StoreError> {
        let file = std::fs::File::open(path.as_ref())?;
        let mut raw = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: RawEditRecord =
                serde_json::from_str(&line).map_err(|e| StoreError::MalformedRecord {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            raw.push(rec);
        }
        Self::assemble(raw, layout)
    }

    /// Load a memory from JSONL text held in memory.
    pub fn load_str(text: &str, layout: MemoryLayout) -> Result<Self, StoreError> {
        let mut raw = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: RawEditRecord =
                serde_json::from_str(line).map_err(|e| StoreError::MalformedRecord {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
            raw.push(rec);
        }
        Self::assemble(raw, layout)
    }

    fn assemble(raw: Vec<RawEditRecord>, layout: MemoryLayout) -> Result<Self, StoreError> {
        let mut records = Vec::with_capacity(raw.len());
        let mut seen = HashSet::new();
        for (i, rec) in raw.into_iter().enumerate() {
            let line = i + 1;
            let post_edit = match rec.post_edit {
                Some(p) if !p.trim().is_empty() => p,
                Some(_) => {
                    return Err(StoreError::MalformedRecord {
                        line,
                        reason: "post_edit is empty".into(),
                    })
                }
                None => {
                    return Err(StoreError::MalformedRecord {
                        line,
                        reason: "missing post_edit".into(),
                    })
                }
            };
            let pre_edit = rec.pre_edit.filter(|p| !p.trim().is_empty());
            if layout == MemoryLayout::PairedPrePost && pre_edit.is_none() {
                return Err(StoreError::MalformedRecord {
                    line,
                    reason: "paired_pre_post layout requires a non-empty pre_edit".into(),
                });
            }
            let id = rec.id.unwrap_or_else(|| format!("edit-{:06}", i));
            if !seen.insert(id.clone()) {
                return Err(StoreError::DuplicateId(id));
            }
            records.push(EditRecord {
                id,
                pre_edit,
                post_edit,
                tags: rec.tags.unwrap_or_default(),
            });
        }
        Ok(EditMemory { records, layout })
    }

    pub fn layout(&self) -> MemoryLayout {
        self.layout
    }

    pub fn records(&self) -> &[EditRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EditRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// The text BM25 indexes for a record: pre-edit text under the paired
    /// layout, post-edit text otherwise.
    pub fn search_text<'a>(&self, record: &'a EditRecord) -> &'a str {
        match self.layout {
            MemoryLayout::PairedPrePost => record.pre_edit.as_deref().unwrap_or(""),
            MemoryLayout::PostOnly => &record.post_edit,
        }
    }

    /// Serialize back to the JSONL edit format, one record per line.
    pub fn to_jsonl(&self) -> Result<String, StoreError> {
        let mut out = String::new();
        for rec in &self.records {
            out.push_str(&serde_json::to_string(rec)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Name of the tokenization rule baked into [`tokenize`]; stored in the index
/// so persisted indexes can be checked for compatibility.
pub const TOKENIZER_ID: &str = "lower-alnum-cjk-v1";

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3400..=0x4DBF      // CJK extension A
        | 0x4E00..=0x9FFF    // CJK unified ideographs
        | 0xF900..=0xFAFF    // CJK compatibility ideographs
        | 0x20000..=0x2A6DF  // CJK extension B
    )
}

/// Lowercase and split on non-alphanumeric runs; CJK codepoints are each
/// their own token. No stemming, no stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            if is_cjk(c) {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                tokens.push(c.to_string());
            } else {
                current.extend(c.to_lowercase());
            }
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Okapi BM25 parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// BM25 statistics over the search side of one memory.
///
/// Immutable after construction; safe to share across concurrent runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetrievalIndex {
    /// Per-record term frequencies, aligned with the memory's record order.
    doc_term_freqs: Vec<BTreeMap<String, u32>>,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
    /// Per-term idf: ln((N - df + 0.5) / (df + 0.5) + 1). The +1 keeps idf
    /// non-negative for terms that occur in every document.
    idf: BTreeMap<String, f64>,
    params: Bm25Params,
    tokenizer_id: String,
    #[serde(skip)]
    id_to_pos: HashMap<String, usize>,
}

impl RetrievalIndex {
    /// Index the search-side text of every record of `memory`. An empty
    /// memory yields a valid index that never returns a hit.
    pub fn build(memory: &EditMemory, params: Bm25Params) -> Self {
        let mut doc_term_freqs = Vec::with_capacity(memory.len());
        let mut doc_ids = Vec::with_capacity(memory.len());
        let mut doc_lengths = Vec::with_capacity(memory.len());
        let mut df: BTreeMap<String, u32> = BTreeMap::new();

        for rec in memory.records() {
            let tokens = tokenize(memory.search_text(rec));
            let mut freqs: BTreeMap<String, u32> = BTreeMap::new();
            for t in &tokens {
                *freqs.entry(t.clone()).or_insert(0) += 1;
            }
            for term in freqs.keys() {
                *df.entry(term.clone()).or_insert(0) += 1;
            }
            doc_lengths.push(tokens.len() as u32);
            doc_ids.push(rec.id.clone());
            doc_term_freqs.push(freqs);
        }

        let n = doc_ids.len() as f64;
        let avg_doc_length = if doc_ids.is_empty() {
            0.0
        } else {
            doc_lengths.iter().map(|&l| l as f64).sum::<f64>() / n
        };
        let idf = df
            .into_iter()
            .map(|(term, d)| {
                let d = d as f64;
                (term, ((n - d + 0.5) / (d + 0.5) + 1.0).ln())
            })
            .collect();

        let id_to_pos = doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();

        RetrievalIndex {
            doc_term_freqs,
            doc_ids,
            doc_lengths,
            avg_doc_length,
            idf,
            params,
            tokenizer_id: TOKENIZER_ID.to_string(),
            id_to_pos,
        }
    }

    /// Restore the id lookup after deserialization.
    pub fn rebuild_lookup(&mut self) {
        self.id_to_pos = self
            .doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn tokenizer_id(&self) -> &str {
        &self.tokenizer_id
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.idf.get(term).copied()
    }

    /// Check that this index covers exactly the records of `memory` and was
    /// built with the current tokenization rule.
    pub fn verify_against(&self, memory: &EditMemory) -> Result<(), StoreError> {
        if self.tokenizer_id != TOKENIZER_ID {
            return Err(StoreError::IndexMismatch(format!(
                "index tokenizer {} != {}",
                self.tokenizer_id, TOKENIZER_ID
            )));
        }
        let mem_ids: Vec<&str> = memory.records().iter().map(|r| r.id.as_str()).collect();
        let idx_ids: Vec<&str> = self.doc_ids.iter().map(String::as_str).collect();
        if mem_ids != idx_ids {
            return Err(StoreError::IndexMismatch(
                "index record ids differ from memory".into(),
            ));
        }
        Ok(())
    }

    /// Okapi BM25 score of `query` against one record. Query terms are
    /// counted with multiplicity.
    pub fn score(&self, record_id: &str, query: &str) -> Result<f64, StoreError> {
        let pos = *self
            .id_to_pos
            .get(record_id)
            .ok_or_else(|| StoreError::UnknownRecord(record_id.to_string()))?;
        Ok(self.score_at(pos, &tokenize(query)))
    }

    fn score_at(&self, pos: usize, query_tokens: &[String]) -> f64 {
        let freqs = &self.doc_term_freqs[pos];
        let dl = self.doc_lengths[pos] as f64;
        let Bm25Params { k1, b } = self.params;
        let mut total = 0.0;
        for term in query_tokens {
            let tf = match freqs.get(term) {
                Some(&tf) => tf as f64,
                None => continue,
            };
            let idf = self.idf.get(term).copied().unwrap_or(0.0);
            let norm = 1.0 - b + b * dl / self.avg_doc_length;
            total += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
        }
        total
    }

    /// Resolve `query` to the single best non-excluded record with score
    /// strictly above `min_score`, mapped to its post-edit text. Ties break
    /// to the lexicographically lowest record id.
    pub fn retrieve(
        &self,
        memory: &EditMemory,
        query: &str,
        min_score: f64,
        exclude: &HashSet<String>,
    ) -> Option<EditHit> {
        let query_tokens = tokenize(query);
        let mut best: Option<(f64, usize)> = None;
        for pos in 0..self.doc_ids.len() {
            if exclude.contains(&self.doc_ids[pos]) {
                continue;
            }
            let score = self.score_at(pos, &query_tokens);
            if score <= min_score {
                continue;
            }
            best = match best {
                None => Some((score, pos)),
                Some((best_score, best_pos)) => {
                    if score > best_score
                        || (score == best_score && self.doc_ids[pos] < self.doc_ids[best_pos])
                    {
                        Some((score, pos))
                    } else {
                        Some((best_score, best_pos))
                    }
                }
            };
        }
        best.map(|(score, pos)| {
            let record = memory
                .get(&self.doc_ids[pos])
                .expect("index covers exactly the records of its memory")
                .clone();
            let fact_text = record.post_edit.clone();
            EditHit {
                record,
                score,
                fact_text,
            }
        })
    }

    /// All records with score above `min_score`, best first, ties broken by
    /// id. Used by the naive-RAG baseline, which wants more than the top hit.
    pub fn rank(&self, query: &str, min_score: f64) -> Vec<(String, f64)> {
        let query_tokens = tokenize(query);
        let mut scored: Vec<(String, f64)> = (0..self.doc_ids.len())
            .map(|pos| (self.doc_ids[pos].clone(), self.score_at(pos, &query_tokens)))
            .filter(|(_, s)| *s >= min_score)
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        scored
    }
}

/// A retrieval result: the winning record mapped to the post-edit fact the
/// pipeline should see.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditHit {
    pub record: EditRecord,
    pub score: f64,
    /// Always the record's post-edit statement, regardless of which side was
    /// searched.
    pub fact_text: String,
}
