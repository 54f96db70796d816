//! EditCoT: answer questions under a memory of knowledge edits by iteratively
//! generating, conflict-checking, and rewriting a chain-of-thought.
//!
//! The crate is organized around the pipeline's moving parts:
//!
//! - [`store`] — the edit memory and its BM25 retrieval index
//! - [`gateway`] — a uniform generation/classification interface over remote
//!   chat-completions endpoints and a scripted backend for tests
//! - [`prompts`] — the prompt template library plus output parsers
//! - [`engine`] — the iterative retrieve → detect-conflict → rewrite loop
//! - [`forge`] — construction of CoT-editor training data from a question corpus
//! - [`eval`] — benchmark loading, batch/locality protocols, and metrics

pub mod engine;
pub mod eval;
pub mod forge;
pub mod gateway;
pub mod prompts;
pub mod store;

pub use engine::{PipelineTrace, RunConfig, StopReason};
pub use gateway::{DecodeParams, LabelDistribution, Message, MessageSequence, Role};
pub use prompts::{ChainOfThought, PromptLibrary, TemplateId};
pub use store::{EditHit, EditMemory, EditRecord, MemoryLayout, RetrievalIndex};
