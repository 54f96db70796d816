//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use editcot::engine::Engine;
use editcot::eval::{adapter, run_eval, BatchPlan, EvalMode, EvalRunner};
use editcot::forge::{examples_to_jsonl, forge as run_forge, load_questions_path, FileRetriever};
use editcot::store::{Bm25Params, EditMemory, RetrievalIndex};

use crate::config::LoadedConfig;
use crate::CliError;

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn load_memory(loaded: &LoadedConfig) -> Result<EditMemory, CliError> {
    let path = loaded.require_file("memory_file", &loaded.config.paths.memory_file)?;
    EditMemory::load_path(&path, loaded.memory_layout())
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn load_or_build_index(loaded: &LoadedConfig, memory: &EditMemory) -> Result<RetrievalIndex, CliError> {
    match &loaded.config.paths.index_file {
        Some(p) => {
            let path = loaded.resolve(p);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("paths.index_file {}: {e}", path.display())))?;
            let mut index: RetrievalIndex = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("paths.index_file {}: {e}", path.display())))?;
            index.rebuild_lookup();
            index
                .verify_against(memory)
                .map_err(|e| CliError::Config(format!("paths.index_file {}: {e}", path.display())))?;
            Ok(index)
        }
        None => Ok(RetrievalIndex::build(memory, Bm25Params::default())),
    }
}

fn write_output(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(runtime)?;
        }
    }
    std::fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn answer(config_path: &Path, question: &str, trace_path: Option<PathBuf>) -> Result<(), CliError> {
    let loaded = LoadedConfig::load(config_path)?;
    let memory = load_memory(&loaded)?;
    let index = load_or_build_index(&loaded, &memory)?;
    let library = loaded.library()?;
    let (reasoner, editor) = loaded.backends()?;
    loaded.echo_effective(&BTreeMap::new())?;

    let engine = Engine::new(reasoner.as_ref(), editor.as_ref(), &library);
    let trace = engine
        .run(&index, &memory, question, &loaded.config.run)
        .map_err(|failure| CliError::Runtime(failure.to_string()))?;

    println!("{}", trace.final_answer);
    if let Some(path) = trace_path {
        write_output(&path, &trace.to_json_pretty())?;
        eprintln!("trace written to {}", path.display());
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    config_path: &Path,
    batch_size: Option<usize>,
    seed: Option<u64>,
    sample: Option<usize>,
    mode: &str,
    baseline: Option<String>,
    k: usize,
    parallel: usize,
    output: Option<PathBuf>,
) -> Result<(), CliError> {
    let loaded = LoadedConfig::load(config_path)?;
    let dataset_path = loaded.require_file("dataset_file", &loaded.config.paths.dataset_file)?;
    let adapter_path = loaded.require_file("adapter_config", &loaded.config.paths.adapter_config)?;
    let adapter_config = adapter::AdapterConfig::from_path(&adapter_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", adapter_path.display())))?;
    let dataset = adapter::load_dataset(&dataset_path, &adapter_config)
        .map_err(|e| CliError::Config(format!("{}: {e}", dataset_path.display())))?;

    let mode = match mode {
        "edited" => EvalMode::Edited,
        "locality" => EvalMode::LocalityHoldout,
        other => return Err(CliError::Config(format!("unknown mode {other:?} (edited|locality)"))),
    };
    let plan = BatchPlan {
        batch_size: batch_size.unwrap_or(1),
        seed: seed.unwrap_or(0),
        sample,
    };

    let mut overrides = BTreeMap::new();
    overrides.insert("batch_size".into(), plan.batch_size.to_string());
    overrides.insert("mode".into(), format!("{mode:?}"));
    if let Some(b) = &baseline {
        overrides.insert("baseline".into(), b.clone());
    }
    loaded.echo_effective(&overrides)?;

    let library = loaded.library()?;
    let (reasoner, editor) = loaded.backends()?;

    let report = match baseline.as_deref() {
        None => {
            let engine = Engine::new(reasoner.as_ref(), editor.as_ref(), &library);
            let runner = EvalRunner::Engine { engine: &engine, config: &loaded.config.run };
            run_eval(&dataset, &runner, &plan, mode, parallel).map_err(runtime)?
        }
        Some("naive-rag") => {
            let runner = EvalRunner::NaiveRag { reasoner: reasoner.as_ref(), k };
            run_eval(&dataset, &runner, &plan, mode, parallel).map_err(runtime)?
        }
        Some(other) => {
            return Err(CliError::Config(format!("unknown baseline {other:?} (supported: naive-rag)")))
        }
    };

    print!("{}", report.render_table());
    let out = output.unwrap_or_else(|| loaded.output_dir().join("eval-report.json"));
    write_output(&out, &report.to_json_pretty())?;
    eprintln!("report written to {}", out.display());
    Ok(())
}

pub fn forge(
    config_path: &Path,
    threshold: Option<f64>,
    parallel: usize,
    output: Option<PathBuf>,
    report_path: Option<PathBuf>,
) -> Result<(), CliError> {
    let loaded = LoadedConfig::load(config_path)?;
    let questions_path = loaded.require_file("questions_file", &loaded.config.paths.questions_file)?;
    let retriever_path = loaded.require_file("retriever_file", &loaded.config.paths.retriever_file)?;

    let questions = load_questions_path(&questions_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", questions_path.display())))?;
    let retriever = FileRetriever::from_path(&retriever_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", retriever_path.display())))?;

    let mut forge_config = loaded.config.forge.clone();
    if let Some(t) = threshold {
        if !(t > 0.0 && t <= 1.0) {
            return Err(CliError::Config("--threshold must be in (0, 1]".into()));
        }
        forge_config.conflict_threshold = t;
    }

    let mut overrides = BTreeMap::new();
    overrides.insert("conflict_threshold".into(), forge_config.conflict_threshold.to_string());
    loaded.echo_effective(&overrides)?;

    let library = loaded.library()?;
    let (backend, _editor) = loaded.backends()?;

    let (examples, report) =
        run_forge(&questions, &retriever, backend.as_ref(), &library, &forge_config, parallel)
            .map_err(runtime)?;

    let out = output.unwrap_or_else(|| loaded.output_dir().join("training.jsonl"));
    write_output(&out, &examples_to_jsonl(&examples).map_err(runtime)?)?;
    let report_out = report_path.unwrap_or_else(|| loaded.output_dir().join("forge-report.json"));
    write_output(&report_out, &report.to_json_pretty())?;

    println!(
        "processed {} question(s): {} example(s) accepted, {} rejection(s)",
        report.processed,
        report.accepted,
        report.rejection_counts.values().sum::<usize>()
    );
    eprintln!("training data written to {}", out.display());
    eprintln!("report written to {}", report_out.display());
    Ok(())
}

pub fn index(config_path: &Path, output: Option<PathBuf>) -> Result<(), CliError> {
    let loaded = LoadedConfig::load(config_path)?;
    let memory = load_memory(&loaded)?;
    loaded.echo_effective(&BTreeMap::new())?;

    let index = RetrievalIndex::build(&memory, Bm25Params::default());
    let out = output.unwrap_or_else(|| loaded.output_dir().join("index.json"));
    write_output(&out, &serde_json::to_string_pretty(&index).map_err(runtime)?)?;
    println!(
        "indexed {} record(s), avg doc length {:.2}, tokenizer {}",
        index.len(),
        index.avg_doc_length(),
        index.tokenizer_id()
    );
    eprintln!("index written to {}", out.display());
    Ok(())
}
