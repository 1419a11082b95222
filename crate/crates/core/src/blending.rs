//! Fusion of ranked candidates with the gold and context-grounded sentences, and
//! consolidation into the final dataset.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{RetryPolicy, TextModel};
use crate::types::{single_line, CandidateSentence, DatasetInstance, RelationTuple, Split};

const FUSION_INTRO: &str = "Given the entity, entity type and the relation between the entity as a tuple , Generate a diverse sentence with using the given entities and the relation between them.\n\
For supporting knowledge and adding diversity we are providing some sentences already generated using this tuple.\n\
So use them for diverse sentence generation.\n";

/// Default fixed trio used for train/dev fusion.
pub const DEFAULT_TRIO: [&str; 3] = ["llama", "gpt-3.5", "flan-t5-webnlg"];

pub const MAX_VALIDATION_RETRIES: usize = 2;

/// Which sentences go into the fusion prompt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlendMode {
    /// Top three ranked candidates, then gold, then the context-grounded sentence.
    #[default]
    Standard,
    /// Every rankable candidate, then gold and context-grounded (ranker ablation).
    NoRanker,
    /// Top three ranked candidates only (gold/context ablation).
    NoGoldEcb,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlendInput {
    pub tuple: RelationTuple,
    /// Ranked candidates, best first (or every candidate in `NoRanker` mode).
    pub top: Vec<CandidateSentence>,
    pub gold: CandidateSentence,
    pub ecb: Option<CandidateSentence>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionPrompt {
    pub text: String,
    /// Generator id behind each `SentenceN` slot.
    pub sources: Vec<String>,
    /// Gold filled a ranked slot because fewer than three candidates were available.
    pub padded_top: bool,
    /// Gold stood in for the missing context-grounded sentence.
    pub missing_ecb: bool,
}

/// Fusion prompt over an arbitrary number of sentences. With five sentences this
/// is the standard amalgamation layout.
pub fn fusion_prompt_text(tuple: &RelationTuple, sentences: &[String]) -> String {
    let n = sentences.len();
    let mut p = String::from(FUSION_INTRO);
    p.push_str(&format!(
        "Do not add any extra information apart from the given {n} sentences.\n"
    ));
    p.push_str(
        "Make sure the relation between the entities is preserved while keeping the sentence tough for relation classification task.\n",
    );
    p.push_str(&format!(
        "Make sure to use information in the all {n} sentences.\n"
    ));
    p.push_str("Tuple_format: (E1, E1_TYPE, RELATION, E2, E2_TYPE)\n");
    p.push_str(&format!("Tuple: {}\n", tuple.display_tuple()));
    for (i, s) in sentences.iter().enumerate() {
        p.push_str(&format!("Sentence{}: {}\n", i + 1, s));
    }
    p.push_str("\nNow create a diverse, difficult sentence using the above information.\n");
    p.push_str(&format!(
        "Make sure to avoid using any extra information apart from the given {n} sentences."
    ));
    p
}

pub fn build_fusion_prompt(input: &BlendInput, mode: BlendMode) -> FusionPrompt {
    let mut slots: Vec<&CandidateSentence> = Vec::new();
    let mut padded_top = false;
    let mut missing_ecb = false;
    match mode {
        BlendMode::Standard => {
            slots.extend(input.top.iter().take(3));
            while slots.len() < 3 {
                slots.push(&input.gold);
                padded_top = true;
            }
            slots.push(&input.gold);
            match &input.ecb {
                Some(e) => slots.push(e),
                None => {
                    slots.push(&input.gold);
                    missing_ecb = true;
                }
            }
        }
        BlendMode::NoRanker => {
            slots.extend(input.top.iter());
            slots.push(&input.gold);
            match &input.ecb {
                Some(e) => slots.push(e),
                None => missing_ecb = true,
            }
        }
        BlendMode::NoGoldEcb => {
            slots.extend(input.top.iter().take(3));
            if slots.is_empty() {
                slots.push(&input.gold);
                padded_top = true;
            }
        }
    }
    let sentences: Vec<String> = slots.iter().map(|c| c.text.clone()).collect();
    FusionPrompt {
        text: fusion_prompt_text(&input.tuple, &sentences),
        sources: slots.iter().map(|c| c.generator_id.clone()).collect(),
        padded_top,
        missing_ecb,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlendSource {
    Fused,
    FallbackRank1,
    FallbackGold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendOutcome {
    pub tuple_id: String,
    pub sentence: String,
    pub source: BlendSource,
    pub provenance: Vec<String>,
    pub attempts: usize,
    pub padded_top: bool,
    pub missing_ecb: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A fusion answer is usable when it is exactly one non-empty line that contains
/// both entity surfaces verbatim.
pub fn validate_fused(tuple: &RelationTuple, output: &str) -> Option<String> {
    let trimmed = output.trim();
    if trimmed.is_empty() || trimmed.contains('\n') {
        return None;
    }
    let line = single_line(trimmed)?;
    tuple.entities_in(&line).then_some(line)
}

fn dedup_keep_order(ids: impl IntoIterator<Item = String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for id in ids {
        if !out.contains(&id) {
            out.push(id);
        }
    }
    out
}

/// Asks the fuser for a sentence, retrying up to [`MAX_VALIDATION_RETRIES`] times on
/// invalid output. When nothing valid comes back, falls back to the rank-1
/// candidate if it contains both entities, else to gold.
pub fn blend(
    input: &BlendInput,
    mode: BlendMode,
    fuser: &dyn TextModel,
    retry: &RetryPolicy,
) -> BlendOutcome {
    let prompt = build_fusion_prompt(input, mode);
    let mut attempts = 0;
    let mut error = None;
    for _ in 0..=MAX_VALIDATION_RETRIES {
        attempts += 1;
        match retry.run(|| fuser.generate(std::slice::from_ref(&prompt.text))) {
            Ok(out) => {
                if let Some(sentence) = out.first().and_then(|o| validate_fused(&input.tuple, o)) {
                    let provenance = dedup_keep_order(
                        std::iter::once(fuser.id().to_string())
                            .chain(prompt.sources.iter().cloned()),
                    );
                    return BlendOutcome {
                        tuple_id: input.tuple.id.clone(),
                        sentence,
                        source: BlendSource::Fused,
                        provenance,
                        attempts,
                        padded_top: prompt.padded_top,
                        missing_ecb: prompt.missing_ecb,
                        error: None,
                    };
                }
                error = Some("fused output failed validation".to_string());
            }
            Err(e) => {
                error = Some(e.to_string());
                break;
            }
        }
    }
    let (sentence, source, provenance) = match input
        .top
        .first()
        .filter(|c| input.tuple.entities_in(&c.text) && !c.text.contains('\n'))
    {
        Some(c) => (
            c.text.clone(),
            BlendSource::FallbackRank1,
            vec![c.generator_id.clone()],
        ),
        None => (
            input.gold.text.clone(),
            BlendSource::FallbackGold,
            vec![input.gold.generator_id.clone()],
        ),
    };
    BlendOutcome {
        tuple_id: input.tuple.id.clone(),
        sentence,
        source,
        provenance,
        attempts,
        padded_top: prompt.padded_top,
        missing_ecb: prompt.missing_ecb,
        error,
    }
}

/// How train/dev instances choose their fusion inputs. Test always uses the ranker.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainDevMode {
    /// Same as test: top-ranked candidates.
    Ranked,
    /// A fixed trio of generators.
    #[default]
    FixedTrio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationConfig {
    pub train_dev_mode: TrainDevMode,
    pub trio: Vec<String>,
    pub blend_mode: BlendMode,
    pub retry: RetryPolicy,
}

impl Default for ConsolidationConfig {
    fn default() -> Self {
        Self {
            train_dev_mode: TrainDevMode::default(),
            trio: DEFAULT_TRIO.iter().map(|s| s.to_string()).collect(),
            blend_mode: BlendMode::default(),
            retry: RetryPolicy::default(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConsolidationDrop {
    #[error("tuple {tuple_id}: no candidate from {generator}")]
    MissingCandidate { tuple_id: String, generator: String },
    #[error("tuple {tuple_id}: no ranked candidates")]
    NoRankedCandidates { tuple_id: String },
    #[error("tuple {tuple_id}: no gold sentence")]
    MissingGold { tuple_id: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsolidationReport {
    pub instances: usize,
    pub per_split: BTreeMap<Split, usize>,
    pub per_source: BTreeMap<BlendSource, usize>,
    pub padded_top: usize,
    pub missing_ecb: usize,
    pub dropped: Vec<ConsolidationDrop>,
    pub errors: usize,
}

/// Everything the blend stage reads, indexed by tuple id.
pub struct BlendMaterials<'a> {
    /// Ranked candidates per tuple, best first.
    pub rankings: &'a HashMap<String, Vec<CandidateSentence>>,
    /// All rankable candidates per tuple, used by the no-ranker ablation and the fixed trio.
    pub candidates: &'a HashMap<String, Vec<CandidateSentence>>,
    pub gold: &'a HashMap<String, CandidateSentence>,
    pub ecb: &'a HashMap<String, CandidateSentence>,
}

fn blend_input(
    tuple: &RelationTuple,
    split: Split,
    config: &ConsolidationConfig,
    m: &BlendMaterials<'_>,
) -> Result<BlendInput, ConsolidationDrop> {
    let gold = m
        .gold
        .get(&tuple.id)
        .cloned()
        .ok_or_else(|| ConsolidationDrop::MissingGold {
            tuple_id: tuple.id.clone(),
        })?;
    let all = m
        .candidates
        .get(&tuple.id)
        .map(Vec::as_slice)
        .unwrap_or(&[]);
    let use_trio = split != Split::Test && config.train_dev_mode == TrainDevMode::FixedTrio;
    let top = if use_trio {
        config
            .trio
            .iter()
            .map(|g| {
                all.iter()
                    .find(|c| &c.generator_id == g)
                    .cloned()
                    .ok_or_else(|| ConsolidationDrop::MissingCandidate {
                        tuple_id: tuple.id.clone(),
                        generator: g.clone(),
                    })
            })
            .collect::<Result<Vec<_>, _>>()?
    } else if config.blend_mode == BlendMode::NoRanker {
        all.to_vec()
    } else {
        m.rankings.get(&tuple.id).cloned().unwrap_or_default()
    };
    if top.is_empty() {
        return Err(ConsolidationDrop::NoRankedCandidates {
            tuple_id: tuple.id.clone(),
        });
    }
    Ok(BlendInput {
        tuple: tuple.clone(),
        top,
        gold,
        ecb: m.ecb.get(&tuple.id).cloned(),
    })
}

/// Blends every tuple (in parallel) and builds the final dataset in input order.
pub fn consolidate(
    assigned: &[(RelationTuple, Split)],
    materials: &BlendMaterials<'_>,
    fuser: &dyn TextModel,
    config: &ConsolidationConfig,
) -> (Vec<DatasetInstance>, Vec<BlendOutcome>, ConsolidationReport) {
    let results: Vec<Result<(DatasetInstance, BlendOutcome), ConsolidationDrop>> = assigned
        .par_iter()
        .map(|(tuple, split)| {
            let input = blend_input(tuple, *split, config, materials)?;
            let outcome = blend(&input, config.blend_mode, fuser, &config.retry);
            let inst = DatasetInstance::new(
                tuple.clone(),
                outcome.sentence.clone(),
                *split,
                outcome.provenance.clone(),
            )
            .expect("blend output always contains both entities");
            Ok((inst, outcome))
        })
        .collect();

    let mut report = ConsolidationReport::default();
    let mut instances = Vec::new();
    let mut outcomes = Vec::new();
    for r in results {
        match r {
            Ok((inst, outcome)) => {
                *report.per_split.entry(inst.split).or_insert(0) += 1;
                *report.per_source.entry(outcome.source).or_insert(0) += 1;
                report.padded_top += usize::from(outcome.padded_top);
                report.missing_ecb += usize::from(outcome.missing_ecb);
                report.errors += usize::from(outcome.error.is_some());
                instances.push(inst);
                outcomes.push(outcome);
            }
            Err(drop) => {
                log::warn!("{drop}");
                report.dropped.push(drop);
            }
        }
    }
    report.instances = instances.len();
    (instances, outcomes, report)
}
