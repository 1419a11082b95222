//! Report tables computed from stage outputs, plus their plain-text rendering.
//!
//! Everything here is a pure function of already-loaded records so the numbers can
//! be checked against an independent recomputation over the same files.

use std::collections::{BTreeMap, HashMap};

use relgen_core::blending::ConsolidationReport;
use relgen_core::generation::GenerationReport;
use relgen_core::ranking::TupleRanking;
use relgen_core::rc_eval::EvalReport;
use relgen_core::scoring::{corpus_bleu, tokenize, ScoreRecord};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub run_id: String,
    pub config_digest: String,
    pub seed: u64,
    /// Blend mode: `standard`, `no-ranker` or `no-gold-ecb`.
    pub mode: String,
    pub train_dev_mode: String,
    pub reference: String,
}

/// Means over one generator's rows of the score file, against silver references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub group: String,
    pub generator: String,
    pub n: usize,
    pub bleu: f64,
    pub bleu_corpus: f64,
    pub meteor: f64,
    pub has: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonReferenceRow {
    pub generator: String,
    pub n: usize,
    pub fluency: f64,
    pub accuracy: f64,
    pub coherence: f64,
    pub relevance: f64,
    pub grammar: f64,
    pub readability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthRow {
    pub source: String,
    pub sentences: usize,
    pub avg_words: f64,
    pub avg_chars: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankRow {
    pub generator: String,
    /// `counts[i]` is how often the generator landed at rank `i + 1`.
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropRow {
    pub generator: String,
    pub tuples: usize,
    pub candidates: usize,
    pub failed_batches: usize,
    pub unmatched_sentences: usize,
    pub ambiguous_sentences: usize,
    pub duplicate_sentences: usize,
    pub unmatched_tuples: usize,
    pub missing_context: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityValue {
    pub score: String,
    pub value: f64,
}

/// Scores of the final dataset sentences; the column of an ablation comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualitySummary {
    pub label: String,
    pub instances: usize,
    pub rows: Vec<QualityValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcRow {
    pub model: String,
    pub prompting: String,
    pub n: usize,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub accuracy: f64,
    pub unparseable: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub model: String,
    pub method: String,
    pub prompt_tokens: usize,
    pub output_tokens: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub run: RunInfo,
    pub reference_based: Vec<ReferenceRow>,
    pub non_reference: Vec<NonReferenceRow>,
    pub lengths: Vec<LengthRow>,
    pub rank_histogram: Vec<RankRow>,
    pub drops: Vec<DropRow>,
    pub consolidation: ConsolidationReport,
    pub quality: QualitySummary,
    pub rc: Vec<RcRow>,
    pub cost: Vec<CostRow>,
}

/// One configured generator as the report sees it.
#[derive(Debug, Clone)]
pub struct GeneratorInfo {
    pub id: String,
    pub kind: String,
    pub method: String,
    pub prompt_cost_per_1k: f64,
    pub output_cost_per_1k: f64,
}

/// One classifier run as persisted by the eval stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcResult {
    pub model: String,
    pub prompting: String,
    pub prompt_tokens: usize,
    pub output_tokens: usize,
    pub prompt_cost_per_1k: f64,
    pub output_cost_per_1k: f64,
    pub report: EvalReport,
}

pub struct ReportInputs<'a> {
    pub run: RunInfo,
    /// Config order; the report keeps it.
    pub generators: &'a [GeneratorInfo],
    pub generation: &'a [GenerationReport],
    pub scores: &'a [ScoreRecord],
    /// Silver text per tuple, for corpus BLEU.
    pub silver: &'a HashMap<String, String>,
    pub rankings: &'a [TupleRanking],
    pub k: usize,
    pub consolidation: &'a ConsolidationReport,
    /// Scores of the final dataset sentences.
    pub final_scores: &'a [ScoreRecord],
    pub rc: &'a [RcResult],
}

/// Label used for the final dataset rows.
pub const DATASET_LABEL: &str = "dataset";

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn reference_row(group: &str, generator: &str, rows: &[&ScoreRecord]) -> ReferenceRow {
    ReferenceRow {
        group: group.to_string(),
        generator: generator.to_string(),
        n: rows.len(),
        bleu: mean(rows.iter().map(|r| r.bleu_silver)),
        bleu_corpus: 0.0,
        meteor: mean(rows.iter().map(|r| r.meteor_silver)),
        has: mean(rows.iter().map(|r| r.scores.has as f64)),
    }
}

fn non_reference_row(generator: &str, rows: &[&ScoreRecord]) -> NonReferenceRow {
    NonReferenceRow {
        generator: generator.to_string(),
        n: rows.len(),
        fluency: mean(rows.iter().map(|r| r.scores.fluency as f64)),
        accuracy: mean(rows.iter().map(|r| r.scores.accuracy as f64)),
        coherence: mean(rows.iter().map(|r| r.scores.coherence as f64)),
        relevance: mean(rows.iter().map(|r| r.scores.relevance as f64)),
        grammar: mean(rows.iter().map(|r| r.scores.grammar)),
        readability: mean(rows.iter().map(|r| r.scores.readability)),
    }
}

fn length_row(source: &str, rows: &[&ScoreRecord]) -> LengthRow {
    LengthRow {
        source: source.to_string(),
        sentences: rows.len(),
        avg_words: mean(rows.iter().map(|r| r.words as f64)),
        avg_chars: mean(rows.iter().map(|r| r.chars as f64)),
    }
}

/// Names of the rows of an ablation comparison, in display order.
pub const QUALITY_ROWS: [&str; 14] = [
    "BLEU_Silver",
    "BLEU_Gold",
    "METEOR_Silver",
    "METEOR_Gold",
    "HAS",
    "FK_Grade",
    "Dale_Chall",
    "GrammarScore",
    "TigerScore_Relevance",
    "TigerScore_Fluency",
    "TigerScore_Accuracy",
    "TigerScore_Logical_Coherence",
    "Avg_Words",
    "Avg_Chars",
];

pub fn quality_summary(label: &str, rows: &[ScoreRecord]) -> QualitySummary {
    let col = |f: &dyn Fn(&ScoreRecord) -> f64| mean(rows.iter().map(f));
    let values = [
        col(&|r| r.bleu_silver),
        col(&|r| r.bleu_gold),
        col(&|r| r.meteor_silver),
        col(&|r| r.meteor_gold),
        col(&|r| r.scores.has as f64),
        col(&|r| r.fk_grade),
        col(&|r| r.scores.readability),
        col(&|r| r.scores.grammar),
        col(&|r| r.scores.relevance as f64),
        col(&|r| r.scores.fluency as f64),
        col(&|r| r.scores.accuracy as f64),
        col(&|r| r.scores.coherence as f64),
        col(&|r| r.words as f64),
        col(&|r| r.chars as f64),
    ];
    QualitySummary {
        label: label.to_string(),
        instances: rows.len(),
        rows: QUALITY_ROWS
            .iter()
            .zip(values)
            .map(|(s, value)| QualityValue {
                score: s.to_string(),
                value,
            })
            .collect(),
    }
}

/// Cost of `prompt` and `output` whitespace tokens at per-1,000 rates.
pub fn token_cost(prompt: usize, output: usize, prompt_rate: f64, output_rate: f64) -> f64 {
    prompt as f64 / 1000.0 * prompt_rate + output as f64 / 1000.0 * output_rate
}

/// Corpus BLEU of `texts` against silver, 0 when nothing aligns.
pub fn corpus_bleu_against(texts: &[(String, String)], silver: &HashMap<String, String>) -> f64 {
    let mut cands = Vec::new();
    let mut refs = Vec::new();
    for (tuple_id, text) in texts {
        if let Some(s) = silver.get(tuple_id) {
            cands.push(tokenize(text));
            refs.push(tokenize(s));
        }
    }
    if cands.is_empty() {
        return 0.0;
    }
    corpus_bleu(&cands, &refs, 4).unwrap_or(0.0)
}

/// Builds every table. `texts` maps `(tuple_id, generator_id)` to the sentence, so
/// corpus BLEU can be computed; the final dataset uses [`DATASET_LABEL`].
pub fn build(inputs: &ReportInputs<'_>, texts: &HashMap<(String, String), String>) -> Report {
    let mut by_gen: BTreeMap<&str, Vec<&ScoreRecord>> = BTreeMap::new();
    for r in inputs.scores {
        by_gen.entry(r.generator_id.as_str()).or_default().push(r);
    }
    let corpus_for = |gen: &str, rows: &[&ScoreRecord]| {
        let pairs: Vec<(String, String)> = rows
            .iter()
            .filter_map(|r| {
                texts
                    .get(&(r.tuple_id.clone(), gen.to_string()))
                    .map(|t| (r.tuple_id.clone(), t.clone()))
            })
            .collect();
        corpus_bleu_against(&pairs, inputs.silver)
    };

    let mut reference_based = Vec::new();
    let mut non_reference = Vec::new();
    let mut lengths = Vec::new();
    for g in inputs.generators {
        let Some(rows) = by_gen.get(g.id.as_str()) else {
            continue;
        };
        let mut row = reference_row(&g.kind, &g.id, rows);
        row.bleu_corpus = corpus_for(&g.id, rows);
        reference_based.push(row);
        non_reference.push(non_reference_row(&g.id, rows));
        lengths.push(length_row(&g.id, rows));
    }
    let final_rows: Vec<&ScoreRecord> = inputs.final_scores.iter().collect();
    if !final_rows.is_empty() {
        let mut row = reference_row(DATASET_LABEL, DATASET_LABEL, &final_rows);
        row.bleu_corpus = corpus_for(DATASET_LABEL, &final_rows);
        reference_based.push(row);
        non_reference.push(non_reference_row(DATASET_LABEL, &final_rows));
        lengths.push(length_row(DATASET_LABEL, &final_rows));
    }

    let mut hist: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for t in inputs.rankings {
        for r in &t.ranked {
            let counts = hist
                .entry(r.candidate.generator_id.as_str())
                .or_insert_with(|| vec![0; inputs.k]);
            if r.rank >= 1 && r.rank <= counts.len() {
                counts[r.rank - 1] += 1;
            }
        }
    }
    let rank_histogram = inputs
        .generators
        .iter()
        .filter_map(|g| {
            hist.get(g.id.as_str()).map(|c| RankRow {
                generator: g.id.clone(),
                counts: c.clone(),
            })
        })
        .collect();

    let drops = inputs
        .generation
        .iter()
        .map(|r| DropRow {
            generator: r.generator_id.clone(),
            tuples: r.tuples,
            candidates: r.candidates,
            failed_batches: r.failed_batches,
            unmatched_sentences: r.drops.unmatched_sentences,
            ambiguous_sentences: r.drops.ambiguous_sentences,
            duplicate_sentences: r.drops.duplicate_sentences,
            unmatched_tuples: r.drops.unmatched_tuples,
            missing_context: r.missing_context,
        })
        .collect();

    let mut cost = Vec::new();
    for r in inputs.generation {
        if let Some(g) = inputs.generators.iter().find(|g| g.id == r.generator_id) {
            cost.push(CostRow {
                model: g.id.clone(),
                method: g.method.clone(),
                prompt_tokens: r.prompt_tokens,
                output_tokens: r.output_tokens,
                cost: token_cost(
                    r.prompt_tokens,
                    r.output_tokens,
                    g.prompt_cost_per_1k,
                    g.output_cost_per_1k,
                ),
            });
        }
    }
    for r in inputs.rc {
        cost.push(CostRow {
            model: r.model.clone(),
            method: prompting_label(&r.prompting).to_string(),
            prompt_tokens: r.prompt_tokens,
            output_tokens: r.output_tokens,
            cost: token_cost(
                r.prompt_tokens,
                r.output_tokens,
                r.prompt_cost_per_1k,
                r.output_cost_per_1k,
            ),
        });
    }

    let rc = inputs
        .rc
        .iter()
        .map(|r| RcRow {
            model: r.model.clone(),
            prompting: r.prompting.clone(),
            n: r.report.instances,
            f1: r.report.f1,
            precision: r.report.precision,
            recall: r.report.recall,
            accuracy: r.report.accuracy,
            unparseable: r.report.unparseable,
        })
        .collect();

    Report {
        run: inputs.run.clone(),
        reference_based,
        non_reference,
        lengths,
        rank_histogram,
        drops,
        consolidation: inputs.consolidation.clone(),
        quality: quality_summary(&inputs.run.mode, inputs.final_scores),
        rc,
        cost,
    }
}

/// Column-aligned plain-text table. The first column is left-aligned, the rest right-aligned.
pub fn table(title: &str, headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            if i < widths.len() {
                widths[i] = widths[i].max(cell.chars().count());
            }
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let mut out = String::new();
        for (i, cell) in cells.iter().enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            let pad = widths[i].saturating_sub(cell.chars().count());
            if i == 0 {
                out.push_str(cell);
                out.push_str(&" ".repeat(pad));
            } else {
                out.push_str(&" ".repeat(pad));
                out.push_str(cell);
            }
        }
        out.trim_end().to_string()
    };
    let total: usize = widths.iter().sum::<usize>() + 2 * widths.len().saturating_sub(1);
    let mut out = format!("{title}\n");
    out.push_str(&line(headers.to_vec()));
    out.push('\n');
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

pub const REFERENCE_HEADERS: [&str; 7] = [
    "Group",
    "Generation method",
    "N",
    "BLEU",
    "BLEU (corpus)",
    "METEOR",
    "HAS",
];
pub const NON_REFERENCE_HEADERS: [&str; 8] = [
    "Generation method",
    "N",
    "Fluency",
    "Accuracy",
    "Coherence",
    "Relevance",
    "Grammar",
    "Readability",
];
pub const RC_HEADERS: [&str; 7] = [
    "Model",
    "Dataset",
    "F1",
    "Precision",
    "Recall",
    "Accuracy",
    "Unparseable",
];

/// Display name of a prompting style in the classification and cost tables.
pub fn prompting_label(style: &str) -> &str {
    match style {
        "zero-shot" => "Zero shot",
        "few-shot-cot" => "Few Shot COT",
        other => other,
    }
}
pub const COST_HEADERS: [&str; 3] = ["Model", "Method", "Cost ($)"];

impl Report {
    pub fn render(&self) -> String {
        let mut out = format!(
            "Run {} (seed {}, mode {}, train/dev {}, reference {})\nConfig digest {}\n\n",
            self.run.run_id,
            self.run.seed,
            self.run.mode,
            self.run.train_dev_mode,
            self.run.reference,
            self.run.config_digest
        );
        let rows: Vec<Vec<String>> = self
            .reference_based
            .iter()
            .map(|r| {
                vec![
                    r.group.clone(),
                    r.generator.clone(),
                    r.n.to_string(),
                    f4(r.bleu),
                    f4(r.bleu_corpus),
                    f4(r.meteor),
                    f4(r.has),
                ]
            })
            .collect();
        out.push_str(&table(
            "Reference-based scores (silver reference)",
            &REFERENCE_HEADERS,
            &rows,
        ));
        out.push('\n');

        let rows: Vec<Vec<String>> = self
            .non_reference
            .iter()
            .map(|r| {
                vec![
                    r.generator.clone(),
                    r.n.to_string(),
                    f4(r.fluency),
                    f4(r.accuracy),
                    f4(r.coherence),
                    f4(r.relevance),
                    f4(r.grammar),
                    f4(r.readability),
                ]
            })
            .collect();
        out.push_str(&table(
            "Non-reference scores",
            &NON_REFERENCE_HEADERS,
            &rows,
        ));
        out.push('\n');

        let rows: Vec<Vec<String>> = self
            .lengths
            .iter()
            .map(|r| {
                vec![
                    r.source.clone(),
                    r.sentences.to_string(),
                    format!("{:.2}", r.avg_words),
                    format!("{:.2}", r.avg_chars),
                ]
            })
            .collect();
        out.push_str(&table(
            "Sentence length",
            &["Source", "Sentences", "Avg words", "Avg chars"],
            &rows,
        ));
        out.push('\n');

        let k = self
            .rank_histogram
            .iter()
            .map(|r| r.counts.len())
            .max()
            .unwrap_or(0);
        let mut headers = vec!["Generator".to_string()];
        headers.extend((1..=k).map(|i| format!("Rank {i}")));
        let headers: Vec<&str> = headers.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = self
            .rank_histogram
            .iter()
            .map(|r| {
                std::iter::once(r.generator.clone())
                    .chain(r.counts.iter().map(usize::to_string))
                    .collect()
            })
            .collect();
        out.push_str(&table("Rank distribution", &headers, &rows));
        out.push('\n');

        let rows: Vec<Vec<String>> = self
            .drops
            .iter()
            .map(|r| {
                vec![
                    r.generator.clone(),
                    r.tuples.to_string(),
                    r.candidates.to_string(),
                    r.failed_batches.to_string(),
                    r.unmatched_sentences.to_string(),
                    r.ambiguous_sentences.to_string(),
                    r.duplicate_sentences.to_string(),
                    r.unmatched_tuples.to_string(),
                    r.missing_context.to_string(),
                ]
            })
            .collect();
        out.push_str(&table(
            "Mapping drops",
            &[
                "Generator",
                "Tuples",
                "Candidates",
                "Failed batches",
                "Unmatched",
                "Ambiguous",
                "Duplicate",
                "Tuples dropped",
                "Missing context",
            ],
            &rows,
        ));
        out.push('\n');

        let c = &self.consolidation;
        let mut rows = vec![vec!["instances".to_string(), c.instances.to_string()]];
        for (split, n) in &c.per_split {
            rows.push(vec![format!("split {split}"), n.to_string()]);
        }
        for (source, n) in &c.per_source {
            let name = serde_json::to_value(source)
                .ok()
                .and_then(|v| v.as_str().map(str::to_string))
                .unwrap_or_default();
            rows.push(vec![format!("source {name}"), n.to_string()]);
        }
        rows.push(vec!["padded top".into(), c.padded_top.to_string()]);
        rows.push(vec!["missing ecb".into(), c.missing_ecb.to_string()]);
        rows.push(vec!["dropped".into(), c.dropped.len().to_string()]);
        out.push_str(&table("Consolidation", &["Item", "Count"], &rows));
        out.push('\n');

        out.push_str(&comparison_table(std::slice::from_ref(&self.quality)));
        out.push('\n');

        let rows: Vec<Vec<String>> = self
            .rc
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    format!("{DATASET_LABEL}({})", prompting_label(&r.prompting)),
                    pct(r.f1),
                    pct(r.precision),
                    pct(r.recall),
                    pct(r.accuracy),
                    r.unparseable.to_string(),
                ]
            })
            .collect();
        out.push_str(&table("Relation classification (%)", &RC_HEADERS, &rows));
        out.push('\n');

        let rows: Vec<Vec<String>> = self
            .cost
            .iter()
            .map(|r| vec![r.model.clone(), r.method.clone(), format!("{:.2}", r.cost)])
            .collect();
        out.push_str(&table("Cost", &COST_HEADERS, &rows));
        out
    }
}

/// Ablation layout: one row per score, one column per run.
pub fn comparison_table(runs: &[QualitySummary]) -> String {
    let mut headers = vec!["Scores".to_string()];
    headers.extend(runs.iter().map(|r| r.label.clone()));
    let headers: Vec<&str> = headers.iter().map(String::as_str).collect();
    let mut rows = Vec::new();
    for (i, name) in QUALITY_ROWS.iter().enumerate() {
        let mut row = vec![name.to_string()];
        for r in runs {
            row.push(
                r.rows
                    .get(i)
                    .filter(|v| v.score == *name)
                    .map(|v| format!("{:.6}", v.value))
                    .unwrap_or_else(|| "-".into()),
            );
        }
        rows.push(row);
    }
    let mut row = vec!["Instances".to_string()];
    row.extend(runs.iter().map(|r| r.instances.to_string()));
    rows.push(row);
    table("Final dataset scores", &headers, &rows)
}
