//! Hand-written per-bucket templates (gold sentences) and their paraphrases (silver).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, Paraphraser};
use crate::types::{single_line, BucketKey, DataError, EntityType, RelationTuple};

pub const E1_SLOT: &str = "{E1}";
pub const E2_SLOT: &str = "{E2}";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TemplateError {
    #[error("template for {key}: {reason}")]
    MalformedTemplate { key: BucketKey, reason: String },
    #[error("template key {template} does not match tuple {tuple_id} key {tuple}")]
    KeyMismatch {
        template: BucketKey,
        tuple: BucketKey,
        tuple_id: String,
    },
    #[error("no template for bucket {0}")]
    MissingTemplate(BucketKey),
    #[error("template file line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Template {
    pub key: BucketKey,
    pub pattern: String,
}

impl Template {
    pub fn new(key: BucketKey, pattern: impl Into<String>) -> Result<Self, TemplateError> {
        let t = Self {
            key,
            pattern: pattern.into(),
        };
        t.validate()?;
        Ok(t)
    }

    /// Each placeholder must occur exactly once.
    pub fn validate(&self) -> Result<(), TemplateError> {
        for slot in [E1_SLOT, E2_SLOT] {
            let n = self.pattern.matches(slot).count();
            if n != 1 {
                return Err(TemplateError::MalformedTemplate {
                    key: self.key.clone(),
                    reason: format!("{slot} occurs {n} times, expected exactly once"),
                });
            }
        }
        if self.pattern.contains('\n') {
            return Err(TemplateError::MalformedTemplate {
                key: self.key.clone(),
                reason: "pattern spans several lines".into(),
            });
        }
        Ok(())
    }

    /// Substitutes the tuple's entities into the pattern.
    pub fn fill(&self, tuple: &RelationTuple) -> Result<String, TemplateError> {
        self.validate()?;
        let key = tuple.key();
        if key != self.key {
            return Err(TemplateError::KeyMismatch {
                template: self.key.clone(),
                tuple: key,
                tuple_id: tuple.id.clone(),
            });
        }
        // Split around the placeholders rather than chained `replace`, so an entity
        // surface that itself contains "{E2}" cannot be substituted twice.
        let (e1_at, e2_at) = (
            self.pattern.find(E1_SLOT).expect("validated"),
            self.pattern.find(E2_SLOT).expect("validated"),
        );
        let mut out = String::with_capacity(self.pattern.len() + tuple.e1.len() + tuple.e2.len());
        let (first, first_val, second, second_val) = if e1_at < e2_at {
            (e1_at, &tuple.e1, e2_at, &tuple.e2)
        } else {
            (e2_at, &tuple.e2, e1_at, &tuple.e1)
        };
        out.push_str(&self.pattern[..first]);
        out.push_str(first_val);
        out.push_str(&self.pattern[first + E1_SLOT.len()..second]);
        out.push_str(second_val);
        out.push_str(&self.pattern[second + E2_SLOT.len()..]);
        Ok(out.trim().to_string())
    }
}

/// One template per bucket, loaded from `t1 \t r \t t2 \t pattern` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TemplateSet {
    templates: BTreeMap<BucketKey, Template>,
}

impl TemplateSet {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let mut templates = BTreeMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.splitn(4, '\t').collect();
            if fields.len() != 4 {
                return Err(TemplateError::Parse {
                    line: line_no,
                    reason: "expected t1, r, t2 and pattern separated by tabs".into(),
                });
            }
            let t1: EntityType = fields[0].parse()?;
            let t2: EntityType = fields[2].parse()?;
            let key = BucketKey::new(t1, fields[1].trim(), t2);
            let template = Template::new(key.clone(), fields[3].trim())?;
            if templates.insert(key.clone(), template).is_some() {
                return Err(TemplateError::Parse {
                    line: line_no,
                    reason: format!("second template for {key}"),
                });
            }
        }
        Ok(Self { templates })
    }

    pub fn from_templates(templates: impl IntoIterator<Item = Template>) -> Self {
        Self {
            templates: templates.into_iter().map(|t| (t.key.clone(), t)).collect(),
        }
    }

    pub fn to_tsv(&self) -> String {
        self.templates
            .values()
            .map(|t| format!("{}\t{}\t{}\t{}\n", t.key.t1, t.key.r, t.key.t2, t.pattern))
            .collect()
    }

    pub fn get(&self, key: &BucketKey) -> Option<&Template> {
        self.templates.get(key)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Fails on the first bucket key (in sorted order) without a template.
    pub fn ensure_covers<'a>(
        &self,
        keys: impl IntoIterator<Item = &'a BucketKey>,
    ) -> Result<(), TemplateError> {
        for key in keys {
            if !self.templates.contains_key(key) {
                return Err(TemplateError::MissingTemplate(key.clone()));
            }
        }
        Ok(())
    }

    pub fn fill(&self, tuple: &RelationTuple) -> Result<String, TemplateError> {
        let key = tuple.key();
        self.templates
            .get(&key)
            .ok_or(TemplateError::MissingTemplate(key))?
            .fill(tuple)
    }
}

/// A paraphrased gold sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SilverSentence {
    pub tuple_id: String,
    pub text: String,
    pub paraphraser_id: String,
    /// True when the paraphraser failed and the gold text was kept.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilverFailure {
    pub paraphraser_id: String,
    pub tuple_id: String,
    pub error: BackendError,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilverOutput {
    /// One entry per input gold, in input order.
    pub silvers: Vec<SilverSentence>,
    pub failures: Vec<SilverFailure>,
}

/// Paraphrases golds split deterministically between two paraphrasers.
///
/// Golds are ranked by tuple id; even ranks go to `paraphraser_a`, odd ranks to
/// `paraphraser_b`. Each paraphraser receives its share in one call; if that call
/// fails, items are retried one by one so a failure can be pinned to a tuple.
/// Items that still fail keep their gold text and are flagged.
pub fn silver_generate(
    golds: &[(RelationTuple, String)],
    paraphraser_a: &dyn Paraphraser,
    paraphraser_b: &dyn Paraphraser,
) -> SilverOutput {
    let mut order: Vec<usize> = (0..golds.len()).collect();
    order.sort_by(|&x, &y| golds[x].0.id.cmp(&golds[y].0.id));
    let mut assignment = vec![0u8; golds.len()];
    for (rank, &i) in order.iter().enumerate() {
        assignment[i] = (rank % 2) as u8;
    }

    let mut texts: Vec<Option<(String, String)>> = vec![None; golds.len()];
    let mut failures = Vec::new();
    for (side, para) in [(0u8, paraphraser_a), (1u8, paraphraser_b)] {
        let idx: Vec<usize> = (0..golds.len())
            .filter(|&i| assignment[i] == side)
            .collect();
        if idx.is_empty() {
            continue;
        }
        let inputs: Vec<String> = idx.iter().map(|&i| golds[i].1.clone()).collect();
        let usable = |out: &[String]| {
            out.len() == inputs.len() && out.iter().all(|s| single_line(s).is_some())
        };
        match para.paraphrase(&inputs) {
            Ok(out) if usable(&out) => {
                for (&i, s) in idx.iter().zip(out) {
                    texts[i] = Some((single_line(&s).expect("checked"), para.id().to_string()));
                }
            }
            _ => {
                for &i in &idx {
                    match para.paraphrase(std::slice::from_ref(&golds[i].1)) {
                        Ok(out) if out.len() == 1 && single_line(&out[0]).is_some() => {
                            texts[i] = Some((
                                single_line(&out[0]).expect("checked"),
                                para.id().to_string(),
                            ));
                        }
                        Ok(_) => failures.push(SilverFailure {
                            paraphraser_id: para.id().to_string(),
                            tuple_id: golds[i].0.id.clone(),
                            error: BackendError::Protocol {
                                backend: para.id().to_string(),
                                endpoint: crate::backend::wire::PARAPHRASE.into(),
                                message: "empty paraphrase".into(),
                            },
                        }),
                        Err(error) => failures.push(SilverFailure {
                            paraphraser_id: para.id().to_string(),
                            tuple_id: golds[i].0.id.clone(),
                            error,
                        }),
                    }
                }
            }
        }
    }

    let silvers = golds
        .iter()
        .zip(texts)
        .zip(&assignment)
        .map(|(((tuple, gold), text), &side)| match text {
            Some((text, paraphraser_id)) => {
                if !tuple.entities_in(&text) {
                    log::warn!(
                        "paraphrase of {} by {} lost an entity surface: {}",
                        tuple.id,
                        paraphraser_id,
                        text
                    );
                }
                SilverSentence {
                    tuple_id: tuple.id.clone(),
                    text,
                    paraphraser_id,
                    fallback: false,
                }
            }
            None => SilverSentence {
                tuple_id: tuple.id.clone(),
                text: gold.clone(),
                paraphraser_id: if side == 0 {
                    paraphraser_a.id().to_string()
                } else {
                    paraphraser_b.id().to_string()
                },
                fallback: true,
            },
        })
        .collect();
    SilverOutput { silvers, failures }
}
