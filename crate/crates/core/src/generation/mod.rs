//! Candidate generation: one facade over template, model and context-grounded
//! generators, split into a raw call phase and a mapping phase so raw model output
//! can be persisted before it is aligned to tuples.

pub mod mapping;
pub mod prompts;

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{RetryPolicy, TextModel};
use crate::store::{read_jsonl, StoreError};
use crate::templates::TemplateSet;
use crate::types::{CandidateSentence, RelationTuple};
use mapping::{map_batch_output, DropReport};
use prompts::{
    build_batch_prompt, build_ecb_prompt, build_generation_prompt, parse_numbered_output,
    ContextSnippet,
};

pub const DEFAULT_BATCH_SIZE: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("batch of {size} tuples exceeds batch size {max}")]
    BatchTooLarge { size: usize, max: usize },
    #[error("backend {0}: batch_size must be at least 1")]
    InvalidBatchSize(String),
    #[error("backend id {0} configured more than once")]
    DuplicateBackend(String),
    #[error("backend {id} of kind {kind} cannot run on the supplied engine")]
    EngineMismatch { id: String, kind: BackendKind },
    #[error("raw batch {index} of {generator} names unknown tuple {tuple_id}")]
    UnknownTuple {
        generator: String,
        index: usize,
        tuple_id: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Template,
    RemoteModel,
    FusionModel,
    Ecb,
    Mock,
}

impl BackendKind {
    /// Whether candidates of this kind compete in the ranker. Gold, silver and ECB
    /// sentences are reference material and enter fusion separately.
    pub fn is_rankable(self) -> bool {
        matches!(self, BackendKind::RemoteModel | BackendKind::Mock)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Template => "template",
            BackendKind::RemoteModel => "remote-model",
            BackendKind::FusionModel => "fusion-model",
            BackendKind::Ecb => "ecb",
            BackendKind::Mock => "mock",
        }
    }
}

impl std::fmt::Display for BackendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `Single`: one prompt per tuple. `Numbered`: one numbered prompt per batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptStyle {
    Single,
    Numbered,
}

fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorBackend {
    pub id: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Overrides the kind's default prompt style.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_style: Option<PromptStyle>,
    #[serde(default)]
    pub retry: RetryPolicy,
}

impl GeneratorBackend {
    pub fn new(id: impl Into<String>, kind: BackendKind) -> Self {
        Self {
            id: id.into(),
            kind,
            endpoint: None,
            batch_size: DEFAULT_BATCH_SIZE,
            prompt_style: None,
            retry: RetryPolicy::default(),
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.batch_size == 0 {
            return Err(GenerationError::InvalidBatchSize(self.id.clone()));
        }
        Ok(())
    }

    /// Decoder-only remote models answer numbered batches; everything else is prompted per tuple.
    pub fn style(&self) -> PromptStyle {
        self.prompt_style.unwrap_or(match self.kind {
            BackendKind::RemoteModel => PromptStyle::Numbered,
            _ => PromptStyle::Single,
        })
    }
}

/// Rejects duplicate ids and invalid batch sizes.
pub fn validate_backends(backends: &[GeneratorBackend]) -> Result<(), GenerationError> {
    let mut seen = std::collections::HashSet::new();
    for b in backends {
        b.validate()?;
        if !seen.insert(b.id.as_str()) {
            return Err(GenerationError::DuplicateBackend(b.id.clone()));
        }
    }
    Ok(())
}

/// Source of entity background text for context-grounded generation.
pub trait ContextProvider: Send + Sync {
    fn context(&self, entity: &str) -> Option<ContextSnippet>;
}

impl ContextProvider for HashMap<String, ContextSnippet> {
    fn context(&self, entity: &str) -> Option<ContextSnippet> {
        self.get(entity).cloned()
    }
}

/// Contexts loaded from a JSONL file of `{entity, text, source}` records. Only the
/// first paragraph of each text is kept; later records for an entity are ignored.
#[derive(Debug, Clone, Default)]
pub struct FileContextProvider {
    snippets: HashMap<String, ContextSnippet>,
}

impl FileContextProvider {
    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let records: Vec<ContextSnippet> = read_jsonl(path)?;
        Ok(Self::from_snippets(records))
    }

    pub fn from_snippets(records: impl IntoIterator<Item = ContextSnippet>) -> Self {
        let mut snippets = HashMap::new();
        for mut s in records {
            s.text = first_paragraph(&s.text);
            if !s.text.is_empty() {
                snippets.entry(s.entity.clone()).or_insert(s);
            }
        }
        Self { snippets }
    }

    pub fn len(&self) -> usize {
        self.snippets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }
}

impl ContextProvider for FileContextProvider {
    fn context(&self, entity: &str) -> Option<ContextSnippet> {
        self.snippets.get(entity).cloned()
    }
}

pub fn first_paragraph(text: &str) -> String {
    text.trim()
        .split("\n\n")
        .next()
        .unwrap_or("")
        .trim()
        .to_string()
}

/// What a backend runs on.
#[derive(Clone, Copy)]
pub enum Engine<'a> {
    Templates(&'a TemplateSet),
    Model(&'a dyn TextModel),
    Ecb {
        model: &'a dyn TextModel,
        contexts: &'a dyn ContextProvider,
    },
}

/// One generation request and its unaligned answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawBatch {
    pub generator_id: String,
    pub index: usize,
    pub style: PromptStyle,
    pub tuple_ids: Vec<String>,
    /// Empty for template backends.
    pub prompts: Vec<String>,
    /// `None` when every attempt failed.
    pub outputs: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub missing_context: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generator_id: String,
    pub tuples: usize,
    pub batches: usize,
    pub failed_batches: usize,
    /// Tuples whose batch failed outright.
    pub failed_tuples: usize,
    pub drops: DropReport,
    pub candidates: usize,
    /// Whitespace-token counts, the basis of the cost report.
    pub prompt_tokens: usize,
    pub output_tokens: usize,
    pub missing_context: usize,
    pub errors: Vec<String>,
}

impl GenerationReport {
    pub fn absorb(&mut self, other: &GenerationReport) {
        self.tuples += other.tuples;
        self.batches += other.batches;
        self.failed_batches += other.failed_batches;
        self.failed_tuples += other.failed_tuples;
        self.drops.absorb(&other.drops);
        self.candidates += other.candidates;
        self.prompt_tokens += other.prompt_tokens;
        self.output_tokens += other.output_tokens;
        self.missing_context += other.missing_context;
        self.errors.extend(other.errors.iter().cloned());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRun {
    pub candidates: Vec<CandidateSentence>,
    pub report: GenerationReport,
}

pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Issues every request for `tuples` and records the raw answers. Batches run in
/// parallel and come back in input order. Failed batches are kept with their error.
pub fn generate_raw(
    backend: &GeneratorBackend,
    engine: Engine<'_>,
    tuples: &[RelationTuple],
) -> Result<Vec<RawBatch>, GenerationError> {
    backend.validate()?;
    let mismatch = || GenerationError::EngineMismatch {
        id: backend.id.clone(),
        kind: backend.kind,
    };
    match (backend.kind, engine) {
        (BackendKind::Template, Engine::Templates(_))
        | (BackendKind::RemoteModel | BackendKind::Mock, Engine::Model(_))
        | (BackendKind::Ecb, Engine::Ecb { .. }) => {}
        _ => return Err(mismatch()),
    }
    let style = backend.style();
    let chunks: Vec<&[RelationTuple]> = tuples.chunks(backend.batch_size).collect();

    let batches = chunks
        .par_iter()
        .enumerate()
        .map(|(index, chunk)| {
            let tuple_ids: Vec<String> = chunk.iter().map(|t| t.id.clone()).collect();
            let mut batch = RawBatch {
                generator_id: backend.id.clone(),
                index,
                style,
                tuple_ids,
                prompts: Vec::new(),
                outputs: None,
                error: None,
                missing_context: 0,
            };
            let model = match engine {
                Engine::Templates(templates) => {
                    let mut outputs = Vec::with_capacity(chunk.len());
                    let mut errors = Vec::new();
                    for t in chunk.iter() {
                        match templates.fill(t) {
                            Ok(s) => outputs.push(s),
                            Err(e) => {
                                errors.push(e.to_string());
                                outputs.push(String::new());
                            }
                        }
                    }
                    batch.style = PromptStyle::Single;
                    batch.outputs = Some(outputs);
                    if !errors.is_empty() {
                        batch.error = Some(errors.join("; "));
                    }
                    return Ok(batch);
                }
                Engine::Model(model) => {
                    batch.prompts = match style {
                        PromptStyle::Single => chunk.iter().map(build_generation_prompt).collect(),
                        PromptStyle::Numbered => {
                            vec![build_batch_prompt(chunk, backend.batch_size)?]
                        }
                    };
                    model
                }
                Engine::Ecb { model, contexts } => {
                    batch.style = PromptStyle::Single;
                    batch.prompts = chunk
                        .iter()
                        .map(|t| {
                            let p = build_ecb_prompt(
                                t,
                                contexts.context(&t.e1).as_ref(),
                                contexts.context(&t.e2).as_ref(),
                            );
                            if p.missing_context {
                                batch.missing_context += 1;
                            }
                            p.text
                        })
                        .collect();
                    model
                }
            };
            match backend.retry.run(|| model.generate(&batch.prompts)) {
                Ok(out) if out.len() == batch.prompts.len() => batch.outputs = Some(out),
                Ok(out) => {
                    batch.error = Some(format!(
                        "expected {} outputs, got {}",
                        batch.prompts.len(),
                        out.len()
                    ))
                }
                Err(e) => batch.error = Some(e.to_string()),
            }
            if let Some(e) = &batch.error {
                log::warn!("{} batch {index} failed: {e}", backend.id);
            }
            Ok(batch)
        })
        .collect::<Result<Vec<_>, GenerationError>>()?;
    Ok(batches)
}

/// Aligns raw answers to tuples through the exact-match mapper.
pub fn map_raw(
    batches: &[RawBatch],
    tuples: &HashMap<String, RelationTuple>,
) -> Result<GenerationRun, GenerationError> {
    let mut candidates = Vec::new();
    let mut report = GenerationReport::default();
    for batch in batches {
        if report.generator_id.is_empty() {
            report.generator_id = batch.generator_id.clone();
        }
        let batch_tuples: Vec<RelationTuple> = batch
            .tuple_ids
            .iter()
            .map(|id| {
                tuples
                    .get(id)
                    .cloned()
                    .ok_or_else(|| GenerationError::UnknownTuple {
                        generator: batch.generator_id.clone(),
                        index: batch.index,
                        tuple_id: id.clone(),
                    })
            })
            .collect::<Result<_, _>>()?;
        report.tuples += batch_tuples.len();
        report.batches += 1;
        report.missing_context += batch.missing_context;
        report.prompt_tokens += batch
            .prompts
            .iter()
            .map(|p| whitespace_tokens(p))
            .sum::<usize>();
        if let Some(e) = &batch.error {
            report.errors.push(format!("batch {}: {e}", batch.index));
        }
        let Some(outputs) = &batch.outputs else {
            report.failed_batches += 1;
            report.failed_tuples += batch_tuples.len();
            continue;
        };
        report.output_tokens += outputs.iter().map(|o| whitespace_tokens(o)).sum::<usize>();
        let mut pairs = Vec::new();
        match batch.style {
            PromptStyle::Numbered => {
                let sentences = outputs
                    .first()
                    .map(|o| parse_numbered_output(o))
                    .unwrap_or_default();
                let m = map_batch_output(&sentences, &batch_tuples);
                report.drops.absorb(&m.report);
                pairs.extend(m.pairs);
            }
            PromptStyle::Single => {
                for (tuple, out) in batch_tuples.iter().zip(outputs) {
                    let sentences: Vec<String> =
                        crate::types::single_line(out).into_iter().collect();
                    let m = map_batch_output(&sentences, std::slice::from_ref(tuple));
                    report.drops.absorb(&m.report);
                    pairs.extend(m.pairs);
                }
            }
        }
        for (tuple, sentence) in pairs {
            if let Some(c) = CandidateSentence::new(&tuple.id, &batch.generator_id, &sentence) {
                candidates.push(c);
            }
        }
    }
    report.candidates = candidates.len();
    Ok(GenerationRun { candidates, report })
}

/// Raw generation followed by mapping.
pub fn generate(
    backend: &GeneratorBackend,
    engine: Engine<'_>,
    tuples: &[RelationTuple],
) -> Result<GenerationRun, GenerationError> {
    let raw = generate_raw(backend, engine, tuples)?;
    let index: HashMap<String, RelationTuple> =
        tuples.iter().map(|t| (t.id.clone(), t.clone())).collect();
    let mut run = map_raw(&raw, &index)?;
    run.report.generator_id = backend.id.clone();
    Ok(run)
}
