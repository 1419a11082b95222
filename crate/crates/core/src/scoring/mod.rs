//! Per-candidate quality parameters.

pub mod bleu;
pub mod meteor;
pub mod readability;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, Corrector, Embedder, Judge, JudgeReport, SentimentClassifier};
use crate::types::{CandidateSentence, RelationTuple};

pub use bleu::{corpus_bleu, sentence_bleu_smoothed};
pub use meteor::{meteor, Meteor, MeteorParams, SynonymMatcher};
pub use readability::{dale_chall, flesch_kincaid_grade};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("empty input")]
    EmptyInput,
    #[error("text has no words")]
    EmptyText,
    #[error("input lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("no {kind} reference for tuple {tuple_id}")]
    MissingReference { tuple_id: String, kind: String },
    #[error("candidate for unknown tuple {0}")]
    UnknownTuple(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Sentiment label: 0 negative, 1 neutral, 2 positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct SentimentClass(u8);

impl SentimentClass {
    pub fn new(value: i64) -> Option<Self> {
        (0..=2).contains(&value).then_some(Self(value as u8))
    }

    pub fn value(self) -> i64 {
        i64::from(self.0)
    }
}

impl TryFrom<i64> for SentimentClass {
    type Error = String;
    fn try_from(v: i64) -> Result<Self, String> {
        Self::new(v).ok_or_else(|| format!("sentiment class {v} outside 0..=2"))
    }
}

impl From<SentimentClass> for i64 {
    fn from(c: SentimentClass) -> i64 {
        c.value()
    }
}

/// The nine inputs of the sentence evaluation index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Bleu,
    Meteor,
    Has,
    Grammar,
    Readability,
    Fluency,
    Accuracy,
    Coherence,
    Relevance,
}

impl Metric {
    pub const ALL: [Metric; 9] = [
        Metric::Bleu,
        Metric::Meteor,
        Metric::Has,
        Metric::Grammar,
        Metric::Readability,
        Metric::Fluency,
        Metric::Accuracy,
        Metric::Coherence,
        Metric::Relevance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Bleu => "bleu",
            Metric::Meteor => "meteor",
            Metric::Has => "has",
            Metric::Grammar => "grammar",
            Metric::Readability => "readability",
            Metric::Fluency => "fluency",
            Metric::Accuracy => "accuracy",
            Metric::Coherence => "coherence",
            Metric::Relevance => "relevance",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub bleu: f64,
    pub meteor: f64,
    pub has: i64,
    pub grammar: f64,
    pub readability: f64,
    pub fluency: i64,
    pub accuracy: i64,
    pub coherence: i64,
    pub relevance: i64,
}

impl ScoreVector {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Bleu => self.bleu,
            Metric::Meteor => self.meteor,
            Metric::Has => self.has as f64,
            Metric::Grammar => self.grammar,
            Metric::Readability => self.readability,
            Metric::Fluency => self.fluency as f64,
            Metric::Accuracy => self.accuracy as f64,
            Metric::Coherence => self.coherence as f64,
            Metric::Relevance => self.relevance as f64,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} = {v} outside [0, 1]"))
            }
        };
        unit("bleu", self.bleu)?;
        unit("meteor", self.meteor)?;
        unit("grammar", self.grammar)?;
        if !(self.readability >= 0.0 && self.readability.is_finite()) {
            return Err(format!(
                "readability = {} is negative or not finite",
                self.readability
            ));
        }
        if !(-2..=0).contains(&self.has) {
            return Err(format!("has = {} outside {{0, -1, -2}}", self.has));
        }
        for (name, v) in [
            ("fluency", self.fluency),
            ("accuracy", self.accuracy),
            ("coherence", self.coherence),
            ("relevance", self.relevance),
        ] {
            if v != 0 && v != -1 {
                return Err(format!("{name} = {v} outside {{0, -1}}"));
            }
        }
        Ok(())
    }
}

/// Lowercases, splits on whitespace, and peels leading `"'([{` and trailing
/// `.,;:!?"')]}` off each token as separate tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    const LEAD: &[char] = &['"', '\'', '(', '[', '{'];
    const TRAIL: &[char] = &['.', ',', ';', ':', '!', '?', '"', '\'', ')', ']', '}'];
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let lower = raw.to_lowercase();
        let mut s = lower.as_str();
        while let Some(c) = s.chars().next().filter(|c| LEAD.contains(c)) {
            out.push(c.to_string());
            s = &s[c.len_utf8()..];
        }
        let mut trailing = Vec::new();
        while let Some(c) = s.chars().next_back().filter(|c| TRAIL.contains(c)) {
            trailing.push(c.to_string());
            s = &s[..s.len() - c.len_utf8()];
        }
        if !s.is_empty() {
            out.push(s.to_string());
        }
        out.extend(trailing.into_iter().rev());
    }
    out
}

/// Cosine similarity clamped to [0, 1]; 0 when either vector is all zeros.
pub fn clamped_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(0.0, 1.0)
}

/// Similarity between each text and its corrected form; 1 means nothing was corrected.
pub fn grammar_scores(
    texts: &[String],
    corrector: &dyn Corrector,
    embedder: &dyn Embedder,
) -> Result<Vec<f64>, ScoreError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let corrected = corrector.correct(texts)?;
    let mut both = texts.to_vec();
    both.extend(corrected);
    let vectors = embedder.embed(&both)?;
    let (orig, corr) = vectors.split_at(texts.len());
    Ok(orig
        .iter()
        .zip(corr)
        .map(|(a, b)| clamped_cosine(a, b))
        .collect())
}

pub fn grammar_score(
    text: &str,
    corrector: &dyn Corrector,
    embedder: &dyn Embedder,
) -> Result<f64, ScoreError> {
    Ok(grammar_scores(&[text.to_string()], corrector, embedder)?[0])
}

/// −|a − b|: 0 when sentiments agree, down to −2 for opposite polarity.
pub fn has_from_classes(a: SentimentClass, b: SentimentClass) -> i64 {
    -(a.value() - b.value()).abs()
}

pub fn has_score(
    generated: &str,
    silver: &str,
    classifier: &dyn SentimentClassifier,
) -> Result<i64, ScoreError> {
    let classes = classifier.classify(&[generated.to_string(), silver.to_string()])?;
    if classes.len() != 2 {
        return Err(ScoreError::LengthMismatch {
            left: 2,
            right: classes.len(),
        });
    }
    Ok(has_from_classes(classes[0], classes[1]))
}

/// Error flags per axis: 0 by default, −1 where the judge reported an error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub fluency: i64,
    pub accuracy: i64,
    pub coherence: i64,
    pub relevance: i64,
}

impl From<JudgeReport> for Flags {
    fn from(r: JudgeReport) -> Self {
        let f = |b: bool| if b { -1 } else { 0 };
        Self {
            fluency: f(r.fluency),
            accuracy: f(r.accuracy),
            coherence: f(r.coherence),
            relevance: f(r.relevance),
        }
    }
}

pub fn tiger_flags(
    text: &str,
    tuple: &RelationTuple,
    judge: &dyn Judge,
) -> Result<Flags, ScoreError> {
    Ok(judge.judge(text, tuple)?.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub sentences: usize,
    pub avg_words: f64,
    pub avg_chars: f64,
}

/// Mean whitespace-token count and mean character count.
pub fn length_stats<S: AsRef<str>>(sentences: &[S]) -> Result<LengthStats, ScoreError> {
    if sentences.is_empty() {
        return Err(ScoreError::EmptyInput);
    }
    let n = sentences.len() as f64;
    let words: usize = sentences
        .iter()
        .map(|s| s.as_ref().split_whitespace().count())
        .sum();
    let chars: usize = sentences.iter().map(|s| s.as_ref().chars().count()).sum();
    Ok(LengthStats {
        sentences: sentences.len(),
        avg_words: words as f64 / n,
        avg_chars: chars as f64 / n,
    })
}

/// The model-backed scorers.
#[derive(Clone, Copy)]
pub struct ScoringBackends<'a> {
    pub corrector: &'a dyn Corrector,
    pub embedder: &'a dyn Embedder,
    pub sentiment: &'a dyn SentimentClassifier,
    pub judge: &'a dyn Judge,
}

/// Which reference the ranked BLEU/METEOR fields use.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceKind {
    Gold,
    #[default]
    Silver,
}

/// One line of the score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub tuple_id: String,
    pub generator_id: String,
    pub scores: ScoreVector,
    pub bleu_gold: f64,
    pub meteor_gold: f64,
    pub bleu_silver: f64,
    pub meteor_silver: f64,
    /// Report-only.
    pub fk_grade: f64,
    pub words: usize,
    pub chars: usize,
}

pub struct References<'a> {
    pub tuples: &'a HashMap<String, RelationTuple>,
    pub gold: &'a HashMap<String, String>,
    pub silver: &'a HashMap<String, String>,
}

fn reference<'a>(
    map: &'a HashMap<String, String>,
    tuple_id: &str,
    kind: &str,
) -> Result<&'a String, ScoreError> {
    map.get(tuple_id)
        .ok_or_else(|| ScoreError::MissingReference {
            tuple_id: tuple_id.into(),
            kind: kind.into(),
        })
}

/// Scores candidates in chunks of `chunk_size`, chunks in parallel. Output order
/// matches input order.
pub fn score_candidates(
    candidates: &[CandidateSentence],
    refs: &References<'_>,
    backends: ScoringBackends<'_>,
    ranked_reference: ReferenceKind,
    chunk_size: usize,
) -> Result<Vec<ScoreRecord>, ScoreError> {
    let meteor = Meteor::new();
    let chunks: Vec<&[CandidateSentence]> = candidates.chunks(chunk_size.max(1)).collect();
    let scored: Vec<Vec<ScoreRecord>> = chunks
        .par_iter()
        .map(|chunk| score_chunk(chunk, refs, backends, ranked_reference, &meteor))
        .collect::<Result<_, _>>()?;
    Ok(scored.into_iter().flatten().collect())
}

fn score_chunk(
    chunk: &[CandidateSentence],
    refs: &References<'_>,
    backends: ScoringBackends<'_>,
    ranked_reference: ReferenceKind,
    meteor: &Meteor,
) -> Result<Vec<ScoreRecord>, ScoreError> {
    let texts: Vec<String> = chunk.iter().map(|c| c.text.clone()).collect();
    let mut silvers = Vec::with_capacity(chunk.len());
    for c in chunk {
        silvers.push(reference(refs.silver, &c.tuple_id, "silver")?.clone());
    }
    let grammar = grammar_scores(&texts, backends.corrector, backends.embedder)?;
    let mut sentiment_in = texts.clone();
    sentiment_in.extend(silvers.iter().cloned());
    let classes = backends.sentiment.classify(&sentiment_in)?;
    if classes.len() != sentiment_in.len() {
        return Err(ScoreError::LengthMismatch {
            left: sentiment_in.len(),
            right: classes.len(),
        });
    }
    let mut out = Vec::with_capacity(chunk.len());
    for (i, c) in chunk.iter().enumerate() {
        let tuple = refs
            .tuples
            .get(&c.tuple_id)
            .ok_or_else(|| ScoreError::UnknownTuple(c.tuple_id.clone()))?;
        let gold = reference(refs.gold, &c.tuple_id, "gold")?;
        let cand = tokenize(&c.text);
        let gold_t = tokenize(gold);
        let silver_t = tokenize(&silvers[i]);
        let bleu_gold = sentence_bleu_smoothed(&cand, &gold_t, 4)?;
        let bleu_silver = sentence_bleu_smoothed(&cand, &silver_t, 4)?;
        let meteor_gold = meteor.score(&cand, &gold_t)?;
        let meteor_silver = meteor.score(&cand, &silver_t)?;
        let flags = tiger_flags(&c.text, tuple, backends.judge)?;
        let (bleu, meteor_v) = match ranked_reference {
            ReferenceKind::Gold => (bleu_gold, meteor_gold),
            ReferenceKind::Silver => (bleu_silver, meteor_silver),
        };
        let scores = ScoreVector {
            bleu,
            meteor: meteor_v,
            has: has_from_classes(classes[i], classes[chunk.len() + i]),
            grammar: grammar[i],
            // Candidates are single-line and non-empty, but may be all punctuation.
            readability: dale_chall(&c.text).unwrap_or(0.0),
            fluency: flags.fluency,
            accuracy: flags.accuracy,
            coherence: flags.coherence,
            relevance: flags.relevance,
        };
        out.push(ScoreRecord {
            tuple_id: c.tuple_id.clone(),
            generator_id: c.generator_id.clone(),
            scores,
            bleu_gold,
            meteor_gold,
            bleu_silver,
            meteor_silver,
            fk_grade: flesch_kincaid_grade(&c.text).unwrap_or(0.0),
            words: c.text.split_whitespace().count(),
            chars: c.text.chars().count(),
        });
    }
    Ok(out)
}
