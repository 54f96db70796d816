//! Python bindings: edit memory, BM25 retrieval, scripted/remote backends,
//! the pipeline runner, forge, and the evaluation metrics.
//!
//! Structured results (traces, reports) cross the boundary as JSON strings;
//! call `json.loads` on the Python side.

use std::collections::HashSet;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};

use editcot::engine::{Engine, RunConfig};
use editcot::forge::{
    examples_to_jsonl, forge as forge_rs, DocumentRetriever, ForgeConfig, ForgeError,
    SourceQuestion,
};
use editcot::gateway::{LlmBackend, Matcher, RemoteBackend, RemoteConfig, ScriptedBackend};
use editcot::prompts::{parse_answer, parse_cot, Locale, ParseMode, PromptLibrary};
use editcot::store::{Bm25Params, EditMemory as EditMemoryRs, MemoryLayout, RetrievalIndex};

fn value_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err<E: std::fmt::Display>(e: E) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_layout(layout: &str) -> PyResult<MemoryLayout> {
    match layout {
        "paired_pre_post" => Ok(MemoryLayout::PairedPrePost),
        "post_only" => Ok(MemoryLayout::PostOnly),
        other => Err(value_err(format!(
            "unknown layout {other:?} (paired_pre_post|post_only)"
        ))),
    }
}

fn parse_locale(locale: &str) -> PyResult<Locale> {
    locale.parse().map_err(value_err)
}

/// The memory of knowledge edits.
#[pyclass(name = "EditMemory")]
struct PyEditMemory {
    inner: EditMemoryRs,
}

#[pymethods]
impl PyEditMemory {
    /// Load from JSONL text; layout is "paired_pre_post" or "post_only".
    #[staticmethod]
    fn from_jsonl(text: &str, layout: &str) -> PyResult<Self> {
        let inner = EditMemoryRs::load_str(text, parse_layout(layout)?).map_err(value_err)?;
        Ok(PyEditMemory { inner })
    }

    #[staticmethod]
    fn from_path(path: &str, layout: &str) -> PyResult<Self> {
        let inner = EditMemoryRs::load_path(path, parse_layout(layout)?).map_err(value_err)?;
        Ok(PyEditMemory { inner })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn to_jsonl(&self) -> PyResult<String> {
        self.inner.to_jsonl().map_err(runtime_err)
    }

    fn records<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyList>> {
        let out = PyList::empty(py);
        for rec in self.inner.records() {
            let d = PyDict::new(py);
            d.set_item("id", &rec.id)?;
            d.set_item("pre_edit", rec.pre_edit.as_deref())?;
            d.set_item("post_edit", &rec.post_edit)?;
            out.append(d)?;
        }
        Ok(out)
    }
}

/// BM25 index over the search side of a memory.
#[pyclass(name = "Index")]
struct PyIndex {
    inner: RetrievalIndex,
}

#[pymethods]
impl PyIndex {
    #[new]
    #[pyo3(signature = (memory, k1 = 1.2, b = 0.75))]
    fn new(memory: &PyEditMemory, k1: f64, b: f64) -> Self {
        PyIndex { inner: RetrievalIndex::build(&memory.inner, Bm25Params { k1, b }) }
    }

    fn score(&self, record_id: &str, query: &str) -> PyResult<f64> {
        self.inner.score(record_id, query).map_err(value_err)
    }

    /// Best hit above `min_score` as a dict, or None.
    #[pyo3(signature = (memory, query, min_score = 0.0, exclude = None))]
    fn retrieve<'py>(
        &self,
        py: Python<'py>,
        memory: &PyEditMemory,
        query: &str,
        min_score: f64,
        exclude: Option<Vec<String>>,
    ) -> PyResult<Option<Bound<'py, PyDict>>> {
        let exclude: HashSet<String> = exclude.unwrap_or_default().into_iter().collect();
        match self.inner.retrieve(&memory.inner, query, min_score, &exclude) {
            None => Ok(None),
            Some(hit) => {
                let d = PyDict::new(py);
                d.set_item("id", &hit.record.id)?;
                d.set_item("score", hit.score)?;
                d.set_item("fact_text", &hit.fact_text)?;
                Ok(Some(d))
            }
        }
    }

    fn avg_doc_length(&self) -> f64 {
        self.inner.avg_doc_length()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// Deterministic scripted backend for offline use.
#[pyclass(name = "ScriptedBackend")]
struct PyScriptedBackend {
    inner: ScriptedBackend,
}

fn to_matcher(when_contains: &Bound<'_, PyAny>) -> PyResult<Matcher> {
    if let Ok(s) = when_contains.extract::<String>() {
        return Ok(Matcher::contains(s));
    }
    let needles: Vec<String> = when_contains.extract()?;
    Ok(Matcher::contains_all(needles))
}

#[pymethods]
impl PyScriptedBackend {
    #[new]
    #[pyo3(signature = (name = "scripted"))]
    fn new(name: &str) -> Self {
        PyScriptedBackend { inner: ScriptedBackend::new(name) }
    }

    /// Register a canned generation; `when_contains` is a substring or a
    /// list of substrings that must all occur in the flattened transcript.
    fn add_text(&self, when_contains: &Bound<'_, PyAny>, text: &str) -> PyResult<()> {
        self.inner.register_text(to_matcher(when_contains)?, text);
        Ok(())
    }

    /// Register a label-probability table for classification requests.
    fn add_labels(&self, when_contains: &Bound<'_, PyAny>, labels: Vec<(String, f64)>) -> PyResult<()> {
        self.inner.register_labels(to_matcher(when_contains)?, labels);
        Ok(())
    }
}

/// Chat-completions HTTP backend.
#[pyclass(name = "RemoteBackend")]
struct PyRemoteBackend {
    inner: RemoteBackend,
}

#[pymethods]
impl PyRemoteBackend {
    #[new]
    #[pyo3(signature = (endpoint_url, model_name, api_key_env_var = None, timeout_secs = 120))]
    fn new(
        endpoint_url: &str,
        model_name: &str,
        api_key_env_var: Option<String>,
        timeout_secs: u64,
    ) -> PyResult<Self> {
        let mut config = RemoteConfig::new(endpoint_url, model_name);
        config.api_key_env_var = api_key_env_var;
        config.timeout = std::time::Duration::from_secs(timeout_secs);
        Ok(PyRemoteBackend { inner: RemoteBackend::new("remote", config).map_err(runtime_err)? })
    }
}

enum BackendRef<'py> {
    Scripted(PyRef<'py, PyScriptedBackend>),
    Remote(PyRef<'py, PyRemoteBackend>),
}

impl BackendRef<'_> {
    fn as_dyn(&self) -> &dyn LlmBackend {
        match self {
            BackendRef::Scripted(b) => &b.inner,
            BackendRef::Remote(b) => &b.inner,
        }
    }
}

fn extract_backend<'py>(obj: &Bound<'py, PyAny>) -> PyResult<BackendRef<'py>> {
    if let Ok(b) = obj.extract::<PyRef<'py, PyScriptedBackend>>() {
        return Ok(BackendRef::Scripted(b));
    }
    if let Ok(b) = obj.extract::<PyRef<'py, PyRemoteBackend>>() {
        return Ok(BackendRef::Remote(b));
    }
    Err(value_err("backend must be a ScriptedBackend or RemoteBackend"))
}

/// Run the full pipeline for one question; returns the trace as a JSON
/// string.
#[pyfunction]
#[pyo3(signature = (
    question,
    memory,
    index,
    reasoner,
    editor = None,
    max_iterations = 4,
    min_retrieval_score = 0.0,
    exclude_applied_edits = true,
    locale = "en",
))]
#[allow(clippy::too_many_arguments)]
fn run_pipeline(
    question: &str,
    memory: &PyEditMemory,
    index: &PyIndex,
    reasoner: &Bound<'_, PyAny>,
    editor: Option<&Bound<'_, PyAny>>,
    max_iterations: u32,
    min_retrieval_score: f64,
    exclude_applied_edits: bool,
    locale: &str,
) -> PyResult<String> {
    let reasoner = extract_backend(reasoner)?;
    let editor = match editor {
        Some(obj) => Some(extract_backend(obj)?),
        None => None,
    };
    let library = PromptLibrary::builtin(parse_locale(locale)?);
    let config = RunConfig {
        max_iterations,
        min_retrieval_score,
        exclude_applied_edits,
        ..Default::default()
    };
    let engine = Engine::new(
        reasoner.as_dyn(),
        editor.as_ref().map(|e| e.as_dyn()).unwrap_or(reasoner.as_dyn()),
        &library,
    );
    let trace = engine
        .run(&index.inner, &memory.inner, question, &config)
        .map_err(|failure| runtime_err(&*failure))?;
    Ok(trace.to_json_pretty())
}

struct PyRetriever {
    callback: Py<PyAny>,
}

impl DocumentRetriever for PyRetriever {
    fn retrieve(&self, question: &SourceQuestion) -> Result<Vec<String>, ForgeError> {
        Python::attach(|py| {
            let result = self
                .callback
                .call1(py, (question.id.clone(), question.question.clone()))
                .map_err(|e| ForgeError::Retriever(e.to_string()))?;
            result
                .extract::<Vec<String>>(py)
                .map_err(|e| ForgeError::Retriever(format!("retriever must return list[str]: {e}")))
        })
    }
}

/// Manufacture CoT-editor training data. `questions` is a list of
/// (id, question) pairs; `retriever` is a callable (id, question) ->
/// list[str]. Returns (training_jsonl, report_json).
#[pyfunction]
#[pyo3(signature = (
    questions,
    retriever,
    backend,
    conflict_threshold = 0.6,
    top_docs = 5,
    first_word_guidance = true,
    locale = "en",
))]
fn forge_training_data(
    questions: Vec<(String, String)>,
    retriever: Py<PyAny>,
    backend: &Bound<'_, PyAny>,
    conflict_threshold: f64,
    top_docs: usize,
    first_word_guidance: bool,
    locale: &str,
) -> PyResult<(String, String)> {
    let backend = extract_backend(backend)?;
    let library = PromptLibrary::builtin(parse_locale(locale)?);
    let questions: Vec<SourceQuestion> = questions
        .into_iter()
        .map(|(id, question)| SourceQuestion { id, question })
        .collect();
    let config = ForgeConfig {
        conflict_threshold,
        top_docs,
        first_word_guidance,
        ..Default::default()
    };
    let retriever = PyRetriever { callback: retriever };
    let (examples, report) =
        forge_rs(&questions, &retriever, backend.as_dyn(), &library, &config, 1)
            .map_err(runtime_err)?;
    Ok((examples_to_jsonl(&examples).map_err(runtime_err)?, report.to_json_pretty()))
}

/// Exact-match normalization.
#[pyfunction]
fn normalize(text: &str) -> String {
    editcot::eval::normalize(text)
}

#[pyfunction]
fn exact_match(prediction: &str, gold_answers: Vec<String>) -> bool {
    editcot::eval::exact_match(prediction, &gold_answers)
}

#[pyfunction]
fn multihop_accuracy(outcomes: Vec<Vec<bool>>) -> f64 {
    editcot::eval::multihop_accuracy(&outcomes)
}

/// Parse a generated chain-of-thought; mode is "step_token" or "newline".
/// Returns (steps, answer).
#[pyfunction]
fn parse_chain(text: &str, mode: &str) -> PyResult<(Vec<String>, Option<String>)> {
    let mode = match mode {
        "step_token" => ParseMode::StepToken,
        "newline" => ParseMode::Newline,
        other => return Err(value_err(format!("unknown mode {other:?} (step_token|newline)"))),
    };
    let cot = parse_cot(text, mode).map_err(value_err)?;
    Ok((cot.steps, cot.answer))
}

/// Strip answer labels and keep the first line.
#[pyfunction]
fn parse_short_answer(text: &str) -> PyResult<String> {
    parse_answer(text).map_err(value_err)
}

/// Render a prompt template to a list of {role, content} dicts.
#[pyfunction]
#[pyo3(signature = (template, bindings, locale = "en"))]
fn render_template<'py>(
    py: Python<'py>,
    template: &str,
    bindings: std::collections::BTreeMap<String, String>,
    locale: &str,
) -> PyResult<Bound<'py, PyList>> {
    use editcot::prompts::TemplateId;
    let id = TemplateId::ALL
        .into_iter()
        .find(|id| id.file_stem() == template)
        .ok_or_else(|| value_err(format!("unknown template {template:?}")))?;
    let library = PromptLibrary::builtin(parse_locale(locale)?);
    let msgs = library.render(id, &bindings).map_err(value_err)?;
    let out = PyList::empty(py);
    for m in msgs.messages() {
        let d = PyDict::new(py);
        d.set_item("role", m.role.as_str())?;
        d.set_item("content", &m.content)?;
        out.append(d)?;
    }
    Ok(out)
}

#[pymodule]
fn editcot_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEditMemory>()?;
    m.add_class::<PyIndex>()?;
    m.add_class::<PyScriptedBackend>()?;
    m.add_class::<PyRemoteBackend>()?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(forge_training_data, m)?)?;
    m.add_function(wrap_pyfunction!(normalize, m)?)?;
    m.add_function(wrap_pyfunction!(exact_match, m)?)?;
    m.add_function(wrap_pyfunction!(multihop_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(parse_chain, m)?)?;
    m.add_function(wrap_pyfunction!(parse_short_answer, m)?)?;
    m.add_function(wrap_pyfunction!(render_template, m)?)?;
    Ok(())
}
