//! Deterministic stand-ins for every model backend.
//!
//! The mock LLM reads the same prompts a real service would receive and answers
//! according to a style derived from its id, so different mock generators yield
//! different (but reproducible) sentences, scores and rankings. Outputs depend only
//! on `(backend id, tuple)`, never on call order or batch composition.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{
    BackendError, Corrector, Embedder, Judge, JudgeReport, Paraphraser, SentimentClassifier,
    TextModel,
};
use crate::generation::prompts::{BATCH_HEADER, ECB_HEADER, ECB_MISSING_CONTEXT};
use crate::scoring::SentimentClass;
use crate::types::{BucketKey, EntityType, RelationTuple};
use crate::util::{relation_words, stable_hash, unit_interval};

pub const POSITIVE_WORDS: &[&str] = &[
    "wonderful",
    "successful",
    "celebrated",
    "great",
    "beautiful",
    "famous",
    "prosperous",
    "admired",
    "remarkable",
];

pub const NEGATIVE_WORDS: &[&str] = &[
    "troubled",
    "controversial",
    "accused",
    "violent",
    "failed",
    "terrible",
    "corrupt",
    "disastrous",
];

/// Per-generator writing habits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Style {
    pub frame_offset: usize,
    /// 0: bare sentence, 1: short clause, 2: long clause.
    pub verbosity: u8,
    pub elaborate: bool,
    /// -1 leans negative, 0 neutral, 1 leans positive.
    pub sentiment: i8,
    /// Probability of an unsolicited entity-type remark.
    pub type_mention: f64,
    /// Probability of a small grammatical slip.
    pub grammar_noise: f64,
}

impl Style {
    pub fn for_id(id: &str) -> Self {
        let h = stable_hash(&["style", id]);
        Self {
            frame_offset: (h % 7) as usize,
            verbosity: ((h >> 8) % 3) as u8,
            elaborate: (h >> 16) % 2 == 1,
            sentiment: ((h >> 24) % 3) as i8 - 1,
            type_mention: ((h >> 32) % 4) as f64 * 0.1,
            grammar_noise: ((h >> 40) % 3) as f64 * 0.1,
        }
    }
}

const FRAMES: &[&str] = &[
    "{E1} has {E2} as its {P}.",
    "The {P} of {E1} is {E2}.",
    "{E2} is the {P} of {E1}.",
    "{E1} is linked to {E2} through the relation {P}.",
    "In terms of {P}, {E1} is associated with {E2}.",
    "Records list {E2} as the {P} of {E1}.",
    "{E1} and {E2} are connected, with {E2} being the {P} of {E1}.",
];

const PLAIN_CLAUSES: &[&str] = &[
    ", as the records show",
    ", and many people know this",
    ", which is well known in the area",
];

const ELABORATE_CLAUSES: &[&str] = &[
    ", reflecting a considerable administrative and historical significance",
    ", an arrangement documented throughout contemporary encyclopedic literature",
    ", illustrating a longstanding institutional relationship between them",
];

fn draw(id: &str, purpose: &str, e1: &str, r: &str, e2: &str) -> f64 {
    unit_interval(stable_hash(&[id, purpose, e1, r, e2]))
}

fn pick<'a>(items: &'a [&'a str], u: f64) -> &'a str {
    items[((u * items.len() as f64) as usize).min(items.len() - 1)]
}

/// Writes one sentence for `(e1, r, e2)` in the style of generator `id`.
pub fn realize(id: &str, e1: &str, t1: Option<EntityType>, r: &str, e2: &str) -> String {
    let style = Style::for_id(id);
    let phrase = relation_words(r);
    let u = |purpose: &str| draw(id, purpose, e1, r, e2);
    let frame_idx = (style.frame_offset + (u("frame") * 3.0) as usize) % FRAMES.len();
    let frame = FRAMES[frame_idx];
    let mut s = frame
        .replace("{E1}", e1)
        .replace("{E2}", e2)
        .replace("{P}", &phrase);
    let body = s.trim_end_matches('.').to_string();
    let mut tail = String::new();
    if style.verbosity > 0 && u("clause") < 0.4 + 0.3 * f64::from(style.verbosity) {
        let pool = if style.elaborate {
            ELABORATE_CLAUSES
        } else {
            PLAIN_CLAUSES
        };
        tail.push_str(pick(pool, u("clause-pick")));
    }
    let mood = u("mood");
    if style.sentiment > 0 && mood < 0.5 {
        tail.push_str(&format!(
            ", a {} connection",
            pick(POSITIVE_WORDS, u("word"))
        ));
    } else if style.sentiment < 0 && mood < 0.5 {
        tail.push_str(&format!(
            ", despite a {} history",
            pick(NEGATIVE_WORDS, u("word"))
        ));
    }
    s = format!("{body}{tail}.");
    if let Some(t1) = t1 {
        if u("type") < style.type_mention {
            s.push_str(&format!(" {e1} is a {}.", t1.as_str().to_lowercase()));
        }
    }
    if u("noise") < style.grammar_noise {
        s = add_slip(&s, e1, e2, u("slip"));
    }
    s
}

/// Introduces a repeated word or a lowercase sentence start, avoiding entity text.
fn add_slip(s: &str, e1: &str, e2: &str, u: f64) -> String {
    if u < 0.5 {
        if let Some(pos) = s.find(" the ") {
            return format!("{} the{}", &s[..pos], &s[pos..]);
        }
    }
    if !s.starts_with(e1) && !s.starts_with(e2) {
        let mut chars = s.chars();
        if let Some(first) = chars.next() {
            return first.to_lowercase().chain(chars).collect();
        }
    }
    s.to_string()
}

/// Scripted misbehaviour for the mock LLM.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Faults {
    /// Every n-th call fails with a transient transport error.
    pub fail_every: Option<u64>,
    pub always_fail: bool,
    /// In numbered output, every k-th line is merged with the next one.
    pub merge_every: Option<usize>,
    /// In numbered output, every k-th line is omitted.
    pub drop_every: Option<usize>,
    /// Swap adjacent output lines.
    pub swap_adjacent: bool,
    /// Every k-th sentence loses its second entity.
    pub drop_entity_every: Option<usize>,
}

/// How the mock answers an amalgamation prompt.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FusionBehavior {
    /// Rework one of the supplied sentences that mentions both entities.
    #[default]
    Blend,
    /// Return supplied sentence number `n` (1-based) verbatim.
    Echo(usize),
    /// Produce a sentence without the second entity.
    DropSecondEntity,
    /// Concatenate every supplied sentence.
    Concatenate,
}

pub struct MockTextModel {
    id: String,
    faults: Faults,
    fusion: FusionBehavior,
    calls: AtomicU64,
}

impl MockTextModel {
    pub fn new(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            faults: Faults::default(),
            fusion: FusionBehavior::default(),
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_faults(mut self, faults: Faults) -> Self {
        self.faults = faults;
        self
    }

    pub fn with_fusion(mut self, fusion: FusionBehavior) -> Self {
        self.fusion = fusion;
        self
    }

    pub fn respond(&self, prompt: &str) -> String {
        if prompt.contains("Tuple_format:") && prompt.contains("\nSentence1:") {
            self.fuse(prompt)
        } else if prompt.starts_with(BATCH_HEADER) {
            self.batch(prompt)
        } else if prompt.starts_with(ECB_HEADER) {
            self.ecb(prompt)
        } else if prompt.starts_with("Generate a sentence, given") {
            self.single(prompt)
        } else if prompt.contains("classify the relationship between two entities") {
            classify_heuristically(prompt)
        } else {
            "I am not sure how to answer that.".to_string()
        }
    }

    fn maybe_drop_entity(&self, sentence: String, e2: &str, index: usize) -> String {
        match self.faults.drop_entity_every {
            Some(k) if k > 0 && (index + 1).is_multiple_of(k) => sentence.replace(e2, "it"),
            _ => sentence,
        }
    }

    fn single(&self, prompt: &str) -> String {
        let (Some(e1), Some(e2), Some(r)) = (
            last_field(prompt, "Entity 1:"),
            last_field(prompt, "Entity 2:"),
            last_field(prompt, "Relation:"),
        ) else {
            return "The entities are related.".into();
        };
        self.maybe_drop_entity(realize(&self.id, e1, None, r, e2), e2, 0)
    }

    fn ecb(&self, prompt: &str) -> String {
        let (Some(e1), Some(e2), Some(r)) = (
            last_field(prompt, "Entity 1:"),
            last_field(prompt, "Entity 2:"),
            last_field(prompt, "Relation:"),
        ) else {
            return "The entities are related.".into();
        };
        let phrase = relation_words(r);
        let ctx = last_field(prompt, "Context 1:").filter(|c| *c != ECB_MISSING_CONTEXT);
        match ctx.and_then(context_gist) {
            Some(gist) => format!("{e1}, which is {gist}, has {e2} as its {phrase}."),
            None => format!("{e1} has {e2} as its {phrase}."),
        }
    }

    fn batch(&self, prompt: &str) -> String {
        let tuples: Vec<(String, EntityType, String, String)> = prompt
            .lines()
            .filter_map(|l| {
                let digits = l.chars().take_while(|c| c.is_ascii_digit()).count();
                if digits == 0 {
                    return None;
                }
                let rest = l[digits..].strip_prefix(". ")?;
                let (e1, t1, r, e2, _) = parse_display_tuple(rest)?;
                Some((e1, t1, r, e2))
            })
            .collect();
        let mut lines: Vec<String> = tuples
            .iter()
            .enumerate()
            .map(|(i, (e1, t1, r, e2))| {
                self.maybe_drop_entity(realize(&self.id, e1, Some(*t1), r, e2), e2, i)
            })
            .collect();
        if let Some(k) = self.faults.drop_every.filter(|k| *k > 0) {
            lines = lines
                .into_iter()
                .enumerate()
                .filter(|(i, _)| (i + 1) % k != 0)
                .map(|(_, l)| l)
                .collect();
        }
        if let Some(k) = self.faults.merge_every.filter(|k| *k > 0) {
            let mut merged = Vec::with_capacity(lines.len());
            let mut i = 0;
            while i < lines.len() {
                if (i + 1) % k == 0 && i + 1 < lines.len() {
                    merged.push(format!(
                        "{} Also, {}",
                        lines[i].trim_end_matches('.'),
                        lines[i + 1]
                    ));
                    i += 2;
                } else {
                    merged.push(lines[i].clone());
                    i += 1;
                }
            }
            lines = merged;
        }
        if self.faults.swap_adjacent {
            for pair in lines.chunks_mut(2) {
                pair.reverse();
            }
        }
        lines
            .iter()
            .enumerate()
            .map(|(i, l)| format!("{}. {}", i + 1, l))
            .collect::<Vec<_>>()
            .join("\n")
    }

    fn fuse(&self, prompt: &str) -> String {
        let tuple = last_field(prompt, "Tuple:").and_then(parse_display_tuple);
        let sentences: Vec<&str> = (1..)
            .map_while(|n| last_field(prompt, &format!("Sentence{n}:")))
            .collect();
        let Some((e1, t1, r, e2, _)) = tuple else {
            return sentences.first().copied().unwrap_or("").to_string();
        };
        match self.fusion {
            FusionBehavior::Echo(n) => sentences
                .get(n.saturating_sub(1))
                .copied()
                .unwrap_or("")
                .to_string(),
            FusionBehavior::Concatenate => sentences.join(" "),
            FusionBehavior::DropSecondEntity => {
                format!("{e1} stands in the relation {} to it.", relation_words(&r))
            }
            FusionBehavior::Blend => {
                let usable: Vec<&str> = sentences
                    .iter()
                    .copied()
                    .filter(|s| s.contains(e1.as_str()) && s.contains(e2.as_str()))
                    .collect();
                if usable.is_empty() {
                    return realize(&self.id, &e1, Some(t1), &r, &e2);
                }
                // Prefer the longest candidate, then fold in a short clause from another one.
                let base = usable
                    .iter()
                    .copied()
                    .max_by_key(|s| (s.len(), stable_hash(&[&self.id, s])))
                    .expect("non-empty");
                let extra = usable
                    .iter()
                    .copied()
                    .filter(|s| *s != base)
                    .min_by_key(|s| (s.len(), stable_hash(&[&self.id, s])));
                match extra {
                    Some(x) => format!(
                        "{}; in other words, {}",
                        base.trim_end_matches('.'),
                        lowercase_first_if_not(x, &[&e1, &e2])
                    ),
                    None => base.to_string(),
                }
            }
        }
    }
}

fn lowercase_first_if_not(s: &str, keep: &[&str]) -> String {
    if keep.iter().any(|k| s.starts_with(k)) {
        return s.to_string();
    }
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// First few words of a context paragraph, rephrased as an appositive.
fn context_gist(ctx: &str) -> Option<String> {
    let first = ctx.split(['.', ';']).next()?.trim();
    let words: Vec<&str> = first.split_whitespace().collect();
    let is_pos = words.iter().position(|w| *w == "is" || *w == "was")?;
    let tail: Vec<&str> = words[is_pos + 1..].iter().take(8).copied().collect();
    if tail.is_empty() {
        None
    } else {
        Some(tail.join(" ").trim_end_matches(',').to_string())
    }
}

impl TextModel for MockTextModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, prompts: &[String]) -> Result<Vec<String>, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst) + 1;
        let scheduled = self
            .faults
            .fail_every
            .is_some_and(|k| k > 0 && n.is_multiple_of(k));
        if self.faults.always_fail || scheduled {
            return Err(BackendError::Transport {
                backend: self.id.clone(),
                endpoint: super::wire::GENERATE.into(),
                message: format!("scripted failure on call {n}"),
            });
        }
        Ok(prompts.iter().map(|p| self.respond(p)).collect())
    }
}

/// Value after the last line starting with `prefix`.
pub(crate) fn last_field<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    text.lines()
        .rev()
        .find_map(|l| l.strip_prefix(prefix))
        .map(str::trim)
}

/// Parses `(e1, t1, r, e2, t2)`, tolerating commas inside entity names.
pub fn parse_display_tuple(s: &str) -> Option<(String, EntityType, String, String, EntityType)> {
    let inner = s.trim().strip_prefix('(')?.strip_suffix(')')?;
    let parts: Vec<&str> = inner.split(", ").collect();
    if parts.len() < 5 {
        return None;
    }
    let t2: EntityType = parts.last()?.parse().ok()?;
    for i in 1..parts.len() - 3 {
        if let Ok(t1) = parts[i].parse::<EntityType>() {
            let r = parts[i + 1].to_string();
            let e1 = parts[..i].join(", ");
            let e2 = parts[i + 2..parts.len() - 1].join(", ");
            if !r.is_empty() && !e1.is_empty() && !e2.is_empty() {
                return Some((e1, t1, r, e2, t2));
            }
        }
    }
    None
}

/// Every `(Type, relation, Type)` triple mentioned in a prompt, in order of first appearance.
pub fn parse_class_list(text: &str) -> Vec<BucketKey> {
    let mut out: Vec<BucketKey> = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find('(') {
        rest = &rest[open + 1..];
        let Some(close) = rest.find(')') else { break };
        let parts: Vec<&str> = rest[..close].split(", ").collect();
        if parts.len() == 3 && !parts[1].is_empty() && !parts[1].contains(char::is_whitespace) {
            if let (Ok(t1), Ok(t2)) = (parts[0].parse(), parts[2].parse()) {
                let key = BucketKey::new(t1, parts[1], t2);
                if !out.contains(&key) {
                    out.push(key);
                }
            }
        }
    }
    out
}

/// The query block of a classification prompt: `(sentence, e1, e2)`.
pub fn classification_query(prompt: &str) -> Option<(String, String, String)> {
    Some((
        last_field(prompt, "Sentence:")?.to_string(),
        last_field(prompt, "Entity1:")?.to_string(),
        last_field(prompt, "Entity2:")?.to_string(),
    ))
}

fn label_json(key: &BucketKey, reasoning: Option<String>) -> String {
    let mut obj = serde_json::Map::new();
    if let Some(r) = reasoning {
        obj.insert("Reasoning".into(), r.into());
    }
    obj.insert("Entity_1_type".into(), key.t1.as_str().into());
    obj.insert("Relation".into(), key.r.clone().into());
    obj.insert("Entity_2_type".into(), key.t2.as_str().into());
    serde_json::to_string_pretty(&serde_json::Value::Object(obj)).expect("serializable")
}

/// Guesses the class whose relation words overlap the sentence most.
fn classify_heuristically(prompt: &str) -> String {
    let classes = parse_class_list(prompt);
    let Some((sentence, e1, e2)) = classification_query(prompt) else {
        return "I cannot classify this sentence.".into();
    };
    if classes.is_empty() {
        return "I cannot classify this sentence.".into();
    }
    let lower = sentence.to_lowercase();
    let score = |k: &BucketKey| {
        let words: Vec<String> = relation_words(&k.r)
            .split_whitespace()
            .map(str::to_string)
            .collect();
        let hits = words.iter().filter(|w| lower.contains(w.as_str())).count();
        hits as f64 / words.len().max(1) as f64
    };
    let mut best = &classes[0];
    let mut best_score = score(best);
    for k in &classes[1..] {
        let s = score(k);
        if s > best_score {
            best = k;
            best_score = s;
        }
    }
    if best_score == 0.0 {
        let i = (stable_hash(&[&sentence, &e1, &e2]) % classes.len() as u64) as usize;
        best = &classes[i];
    }
    let reasoning = prompt.contains("\"Reasoning\":").then(|| {
        format!(
            "The sentence relates {e1} and {e2}; its wording points to the relation {}.",
            best.r
        )
    });
    label_json(best, reasoning)
}

/// Classifier that knows the gold label of every `(sentence, e1, e2)` query, with
/// optional deterministic corruption.
pub struct OracleClassifier {
    id: String,
    truth: HashMap<(String, String, String), BucketKey>,
    error_rate: f64,
    unparseable_rate: f64,
}

impl OracleClassifier {
    pub fn new(
        id: impl Into<String>,
        truth: impl IntoIterator<Item = ((String, String, String), BucketKey)>,
    ) -> Self {
        Self {
            id: id.into(),
            truth: truth.into_iter().collect(),
            error_rate: 0.0,
            unparseable_rate: 0.0,
        }
    }

    pub fn with_noise(mut self, error_rate: f64, unparseable_rate: f64) -> Self {
        self.error_rate = error_rate;
        self.unparseable_rate = unparseable_rate;
        self
    }

    fn answer(&self, prompt: &str) -> String {
        let Some(query) = classification_query(prompt) else {
            return "I cannot classify this sentence.".into();
        };
        let Some(gold) = self.truth.get(&query) else {
            return "I cannot classify this sentence.".into();
        };
        let u = unit_interval(stable_hash(&[&self.id, &query.0, &query.1, &query.2]));
        if u < self.unparseable_rate {
            return "I cannot classify this sentence.".into();
        }
        if u < self.unparseable_rate + self.error_rate {
            let classes = parse_class_list(prompt);
            if let Some(wrong) = classes.iter().find(|k| *k != gold) {
                return label_json(wrong, None);
            }
        }
        label_json(gold, None)
    }
}

impl TextModel for OracleClassifier {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, prompts: &[String]) -> Result<Vec<String>, BackendError> {
        Ok(prompts.iter().map(|p| self.answer(p)).collect())
    }
}

pub struct MockParaphraser {
    id: String,
    variant: u64,
    fail: bool,
}

impl MockParaphraser {
    pub fn new(id: impl Into<String>) -> Self {
        let id = id.into();
        let variant = stable_hash(&["paraphrase", &id]) % 3;
        Self {
            id,
            variant,
            fail: false,
        }
    }

    pub fn failing(id: impl Into<String>) -> Self {
        Self {
            fail: true,
            ..Self::new(id)
        }
    }

    pub fn rewrite(&self, text: &str) -> String {
        let body = text.trim().trim_end_matches(['.', '!', '?']);
        match self.variant {
            0 => format!("In short, {body}."),
            1 => format!("{body}, as it is commonly described."),
            _ => format!("It is stated that {body}."),
        }
    }
}

impl Paraphraser for MockParaphraser {
    fn id(&self) -> &str {
        &self.id
    }

    fn paraphrase(&self, texts: &[String]) -> Result<Vec<String>, BackendError> {
        if self.fail {
            return Err(BackendError::Transport {
                backend: self.id.clone(),
                endpoint: super::wire::PARAPHRASE.into(),
                message: "scripted failure".into(),
            });
        }
        Ok(texts.iter().map(|t| self.rewrite(t)).collect())
    }
}

/// Fixes the slips that [`realize`] introduces: lowercase starts, doubled words,
/// `a` before a vowel, and missing terminal punctuation.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockCorrector;

impl MockCorrector {
    pub fn fix(text: &str) -> String {
        let mut words: Vec<String> = Vec::new();
        for w in text.split_whitespace() {
            if words.last().is_some_and(|prev| {
                prev.eq_ignore_ascii_case(w) && w.chars().all(char::is_alphabetic)
            }) {
                continue;
            }
            words.push(w.to_string());
        }
        for i in 0..words.len().saturating_sub(1) {
            let next_vowel = words[i + 1]
                .chars()
                .next()
                .is_some_and(|c| "aeiouAEIOU".contains(c));
            if next_vowel && (words[i] == "a" || words[i] == "A") {
                words[i].push('n');
            }
        }
        let mut out = words.join(" ");
        if let Some(first) = out.chars().next() {
            if first.is_lowercase() {
                out = first.to_uppercase().chain(out.chars().skip(1)).collect();
            }
        }
        if !out.is_empty() && !out.ends_with(['.', '!', '?']) {
            out.push('.');
        }
        out
    }
}

impl Corrector for MockCorrector {
    fn correct(&self, texts: &[String]) -> Result<Vec<String>, BackendError> {
        Ok(texts.iter().map(|t| Self::fix(t)).collect())
    }
}

/// Signed feature hashing of lowercase word tokens.
#[derive(Debug, Clone, Copy)]
pub struct MockEmbedder {
    pub dim: usize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self { dim: 64 }
    }
}

impl MockEmbedder {
    pub fn vector(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for token in text
            .to_lowercase()
            .split(|c: char| !c.is_alphanumeric() && c != '\'')
            .filter(|t| !t.is_empty())
        {
            let h = stable_hash(&["embed", token]);
            let slot = (h % self.dim as u64) as usize;
            v[slot] += if (h >> 32) & 1 == 0 { 1.0 } else { -1.0 };
        }
        v
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(texts.iter().map(|t| self.vector(t)).collect())
    }
}

/// Lexicon vote: more positive words gives 2, more negative gives 0, otherwise 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockSentiment;

impl MockSentiment {
    pub fn class_of(text: &str) -> SentimentClass {
        let lower = text.to_lowercase();
        let words: Vec<&str> = lower
            .split(|c: char| !c.is_alphabetic())
            .filter(|w| !w.is_empty())
            .collect();
        let pos = words.iter().filter(|w| POSITIVE_WORDS.contains(w)).count();
        let neg = words.iter().filter(|w| NEGATIVE_WORDS.contains(w)).count();
        let value = match pos.cmp(&neg) {
            std::cmp::Ordering::Greater => 2,
            std::cmp::Ordering::Less => 0,
            std::cmp::Ordering::Equal => 1,
        };
        SentimentClass::new(value).expect("0..=2")
    }
}

impl SentimentClassifier for MockSentiment {
    fn classify(&self, texts: &[String]) -> Result<Vec<SentimentClass>, BackendError> {
        Ok(texts.iter().map(|t| Self::class_of(t)).collect())
    }
}

/// Rule-based judge:
/// fluency flags a doubled word; accuracy flags a missing entity or an entity-type
/// remark; coherence flags a repeated word trigram; relevance flags a sentence that
/// uses none of the relation's words.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockJudge;

impl MockJudge {
    pub fn assess(text: &str, e1: &str, r: &str, e2: &str) -> JudgeReport {
        let lower = text.to_lowercase();
        let words: Vec<&str> = lower
            .split(|c: char| !c.is_alphanumeric() && c != '\'')
            .filter(|w| !w.is_empty())
            .collect();
        let fluency = words.windows(2).any(|w| w[0] == w[1]);
        let type_remark = EntityType::ALL.iter().any(|t| {
            let t = t.as_str().to_lowercase();
            lower.contains(&format!("is a {t}")) || lower.contains(&format!("is an {t}"))
        });
        let accuracy = !text.contains(e1) || !text.contains(e2) || type_remark;
        let trigrams: Vec<_> = words.windows(3).collect();
        let coherence = trigrams
            .iter()
            .enumerate()
            .any(|(i, t)| trigrams[i + 1..].contains(t));
        let rel_words = relation_words(r);
        let relevance = !rel_words
            .split_whitespace()
            .filter(|w| w.len() > 2)
            .any(|w| lower.contains(w))
            && rel_words.split_whitespace().any(|w| w.len() > 2);
        JudgeReport {
            fluency,
            accuracy,
            coherence,
            relevance,
        }
    }
}

impl Judge for MockJudge {
    fn judge(&self, text: &str, tuple: &RelationTuple) -> Result<JudgeReport, BackendError> {
        Ok(Self::assess(text, &tuple.e1, &tuple.r, &tuple.e2))
    }
}
