//! Per-tuple candidate ranking by the sentence evaluation index (SEI): the weighted
//! sum of min-max normalized quality scores.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scoring::{Metric, ScoreVector};
use crate::types::CandidateSentence;

pub const DEFAULT_TOP_K: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("weight for {metric} is {value}; weights must be finite and non-negative")]
    Negative { metric: Metric, value: f64 },
    #[error("all weights are zero")]
    AllZero,
    #[error("weight file line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One non-negative weight per metric.
///
/// The defaults put the most weight on accuracy, readability and sentiment
/// agreement, 0.5 on grammar, and little on the remaining judge axes. Only the
/// grammar weight is a published figure; the rest are a reasonable reading of the
/// published ordering and are meant to be tuned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightConfig {
    pub bleu: f64,
    pub meteor: f64,
    pub has: f64,
    pub grammar: f64,
    pub readability: f64,
    pub fluency: f64,
    pub accuracy: f64,
    pub coherence: f64,
    pub relevance: f64,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            bleu: 0.3,
            meteor: 0.3,
            has: 1.0,
            grammar: 0.5,
            readability: 1.0,
            fluency: 0.1,
            accuracy: 1.0,
            coherence: 0.1,
            relevance: 0.1,
        }
    }
}

impl WeightConfig {
    pub fn zero() -> Self {
        Self {
            bleu: 0.0,
            meteor: 0.0,
            has: 0.0,
            grammar: 0.0,
            readability: 0.0,
            fluency: 0.0,
            accuracy: 0.0,
            coherence: 0.0,
            relevance: 0.0,
        }
    }

    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Bleu => self.bleu,
            Metric::Meteor => self.meteor,
            Metric::Has => self.has,
            Metric::Grammar => self.grammar,
            Metric::Readability => self.readability,
            Metric::Fluency => self.fluency,
            Metric::Accuracy => self.accuracy,
            Metric::Coherence => self.coherence,
            Metric::Relevance => self.relevance,
        }
    }

    pub fn set(&mut self, m: Metric, w: f64) {
        let slot = match m {
            Metric::Bleu => &mut self.bleu,
            Metric::Meteor => &mut self.meteor,
            Metric::Has => &mut self.has,
            Metric::Grammar => &mut self.grammar,
            Metric::Readability => &mut self.readability,
            Metric::Fluency => &mut self.fluency,
            Metric::Accuracy => &mut self.accuracy,
            Metric::Coherence => &mut self.coherence,
            Metric::Relevance => &mut self.relevance,
        };
        *slot = w;
    }

    pub fn validate(&self) -> Result<(), WeightError> {
        for m in Metric::ALL {
            let value = self.get(m);
            if !(value.is_finite() && value >= 0.0) {
                return Err(WeightError::Negative { metric: m, value });
            }
        }
        if Metric::ALL.iter().all(|&m| self.get(m) == 0.0) {
            return Err(WeightError::AllZero);
        }
        Ok(())
    }

    /// Applies `metric = weight` lines on top of `self`. `#` starts a comment.
    pub fn apply_overrides(&mut self, text: &str) -> Result<(), WeightError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| WeightError::Parse {
                line: i + 1,
                reason,
            };
            let (name, value) = line
                .split_once('=')
                .ok_or_else(|| err("expected `metric = weight`".into()))?;
            let metric: Metric = name.trim().parse().map_err(err)?;
            let w: f64 = value
                .trim()
                .parse()
                .map_err(|e| err(format!("bad weight {:?}: {e}", value.trim())))?;
            self.set(metric, w);
        }
        self.validate()
    }

    pub fn parse(text: &str) -> Result<Self, WeightError> {
        let mut w = Self::default();
        w.apply_overrides(text)?;
        Ok(w)
    }

    pub fn to_text(&self) -> String {
        Metric::ALL
            .iter()
            .map(|m| format!("{m} = {}\n", self.get(*m)))
            .collect()
    }
}

/// Min-max normalization; a constant (or single-element) list maps to 0.5.
pub fn normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if values.is_empty() {
        return Vec::new();
    }
    if max == min {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}

/// Σ w·n over the nine metrics, in `Metric::ALL` order.
pub fn sei(normalized: &[f64; 9], weights: &WeightConfig) -> f64 {
    Metric::ALL
        .iter()
        .zip(normalized)
        .map(|(m, n)| weights.get(*m) * n)
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub candidate: CandidateSentence,
    pub sei: f64,
    pub rank: usize,
}

/// Tie-break order for equal SEI: position in `priority`, then generator id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Priority(pub Vec<String>);

impl Priority {
    fn position(&self, id: &str) -> usize {
        self.0.iter().position(|p| p == id).unwrap_or(usize::MAX)
    }
}

/// Normalizes each metric across this candidate set, computes SEI and returns the
/// best `min(k, n)` candidates.
pub fn rank_top_k(
    candidates: &[(CandidateSentence, ScoreVector)],
    weights: &WeightConfig,
    priority: &Priority,
    k: usize,
) -> Vec<RankedCandidate> {
    rank_all(candidates, weights, priority)
        .into_iter()
        .take(k)
        .collect()
}

/// Full ranking of one candidate set.
pub fn rank_all(
    candidates: &[(CandidateSentence, ScoreVector)],
    weights: &WeightConfig,
    priority: &Priority,
) -> Vec<RankedCandidate> {
    if candidates.is_empty() {
        return Vec::new();
    }
    let columns: Vec<Vec<f64>> = Metric::ALL
        .iter()
        .map(|m| {
            normalize(
                &candidates
                    .iter()
                    .map(|(_, s)| s.get(*m))
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let mut scored: Vec<(usize, f64)> = (0..candidates.len())
        .map(|i| {
            let row: [f64; 9] = std::array::from_fn(|m| columns[m][i]);
            (i, sei(&row, weights))
        })
        .collect();
    scored.sort_by(|(a, sa), (b, sb)| {
        let (ga, gb) = (
            &candidates[*a].0.generator_id,
            &candidates[*b].0.generator_id,
        );
        sb.total_cmp(sa)
            .then_with(|| priority.position(ga).cmp(&priority.position(gb)))
            .then_with(|| ga.cmp(gb))
            .then_with(|| candidates[*a].0.text.cmp(&candidates[*b].0.text))
    });
    scored
        .into_iter()
        .enumerate()
        .map(|(r, (i, s))| RankedCandidate {
            candidate: candidates[i].0.clone(),
            sei: s,
            rank: r + 1,
        })
        .collect()
}

/// Ranked list of one tuple, as persisted by the rank stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleRanking {
    pub tuple_id: String,
    pub ranked: Vec<RankedCandidate>,
}

/// Groups scored candidates by tuple and ranks each group. Only candidates whose
/// generator is in `rankable` take part. Output is sorted by tuple id.
pub fn rank_by_tuple(
    scored: &[(CandidateSentence, ScoreVector)],
    rankable: &dyn Fn(&str) -> bool,
    weights: &WeightConfig,
    priority: &Priority,
    k: Option<usize>,
) -> Vec<TupleRanking> {
    let mut groups: BTreeMap<&str, Vec<(CandidateSentence, ScoreVector)>> = BTreeMap::new();
    for (c, s) in scored {
        if rankable(&c.generator_id) {
            groups
                .entry(c.tuple_id.as_str())
                .or_default()
                .push((c.clone(), *s));
        }
    }
    let mut out: Vec<TupleRanking> = groups
        .into_iter()
        .map(|(tid, set)| {
            let mut ranked = rank_all(&set, weights, priority);
            if let Some(k) = k {
                ranked.truncate(k);
            }
            TupleRanking {
                tuple_id: tid.to_string(),
                ranked,
            }
        })
        .collect();
    out.sort_by(|a, b| a.tuple_id.cmp(&b.tuple_id));
    out
}

/// How often each generator lands at each rank, for the report.
pub fn rank_histogram(rankings: &[TupleRanking]) -> BTreeMap<String, HashMap<usize, usize>> {
    let mut h: BTreeMap<String, HashMap<usize, usize>> = BTreeMap::new();
    for t in rankings {
        for r in &t.ranked {
            *h.entry(r.candidate.generator_id.clone())
                .or_default()
                .entry(r.rank)
                .or_insert(0) += 1;
        }
    }
    h
}
