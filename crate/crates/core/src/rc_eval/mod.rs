//! Relation-classification evaluation of a dataset with prompted LLMs.

pub mod prompts;

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::TextModel;
use crate::registry::Registry;
use crate::types::{BucketKey, DatasetInstance, EntityType};
pub use prompts::{build_few_shot_cot_prompt, build_zero_shot_prompt, render_classes, Exemplar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RcError {
    #[error("few-shot prompting needs at least one exemplar")]
    NoExemplars,
    #[error("exemplar {0} is also a query instance")]
    ExemplarLeak(String),
    #[error("instance ids do not line up: {0}")]
    Alignment(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnparseableReason {
    /// No JSON object with the three label keys.
    NoLabel,
    /// A label object was found but names a class outside the registry.
    NotInRegistry,
    /// The model call failed.
    BackendFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub raw: String,
    /// `None` means unparseable.
    pub label: Option<BucketKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unparseable: Option<UnparseableReason>,
}

impl Prediction {
    pub fn label_text(&self) -> String {
        match &self.label {
            Some(k) => k.to_string(),
            None => "UNPARSEABLE".into(),
        }
    }
}

fn label_from_object(obj: &serde_json::Map<String, Value>) -> Option<Option<BucketKey>> {
    let get = |k: &str| obj.get(k).and_then(Value::as_str).map(str::trim);
    let (t1, r, t2) = (
        get("Entity_1_type")?,
        get("Relation")?,
        get("Entity_2_type")?,
    );
    let key = match (t1.parse::<EntityType>(), t2.parse::<EntityType>()) {
        (Ok(a), Ok(b)) if !r.is_empty() => Some(BucketKey::new(a, r, b)),
        _ => None,
    };
    Some(key)
}

/// Finds the first JSON object in `response` carrying string values for
/// `Entity_1_type`, `Relation` and `Entity_2_type`, and checks the class against the
/// registry. Every input yields a prediction.
pub fn parse_label(instance_id: &str, response: &str, registry: &Registry) -> Prediction {
    let mut found: Option<Option<BucketKey>> = None;
    for (pos, _) in response.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&response[pos..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(obj))) = stream.next() {
            if let Some(label) = label_from_object(&obj) {
                found = Some(label);
                break;
            }
        }
    }
    let (label, unparseable) = match found {
        None => (None, Some(UnparseableReason::NoLabel)),
        Some(Some(key)) if registry.contains(&key) => (Some(key), None),
        Some(_) => (None, Some(UnparseableReason::NotInRegistry)),
    };
    Prediction {
        instance_id: instance_id.to_string(),
        raw: response.to_string(),
        label,
        unparseable,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PromptStyle {
    ZeroShot,
    FewShotCot(Vec<Exemplar>),
}

/// Prompts `model` for every instance in chunks of `chunk` prompts per request.
/// Failed requests yield unparseable predictions. Output follows input order.
pub fn classify(
    instances: &[DatasetInstance],
    registry: &Registry,
    style: &PromptStyle,
    model: &dyn TextModel,
    chunk: usize,
) -> Result<Vec<Prediction>, RcError> {
    let prompts: Vec<String> = instances
        .iter()
        .map(|i| match style {
            PromptStyle::ZeroShot => Ok(build_zero_shot_prompt(i, registry)),
            PromptStyle::FewShotCot(ex) => build_few_shot_cot_prompt(i, registry, ex),
        })
        .collect::<Result<_, _>>()?;
    let chunks: Vec<(usize, &[String])> = prompts
        .chunks(chunk.max(1))
        .enumerate()
        .map(|(i, c)| (i * chunk.max(1), c))
        .collect();
    let out: Vec<Vec<Prediction>> = chunks
        .par_iter()
        .map(|(offset, ps)| {
            let ids = &instances[*offset..offset + ps.len()];
            match model.generate(ps) {
                Ok(texts) if texts.len() == ps.len() => ids
                    .iter()
                    .zip(texts)
                    .map(|(inst, t)| parse_label(&inst.tuple.id, &t, registry))
                    .collect(),
                other => {
                    if let Err(e) = other {
                        log::warn!("classification request failed: {e}");
                    }
                    ids.iter()
                        .map(|inst| Prediction {
                            instance_id: inst.tuple.id.clone(),
                            raw: String::new(),
                            label: None,
                            unparseable: Some(UnparseableReason::BackendFailure),
                        })
                        .collect()
                }
            }
        })
        .collect();
    Ok(out.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMetrics {
    pub label: String,
    pub support: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub instances: usize,
    pub correct: usize,
    /// Predictions that named a registry class.
    pub predicted: usize,
    pub unparseable: usize,
    pub unparseable_by_reason: BTreeMap<UnparseableReason, usize>,
    /// Correct over predicted: unparseable responses abstain.
    pub precision: f64,
    /// Correct over all instances.
    pub recall: f64,
    pub f1: f64,
    /// Correct over all instances: unparseable responses count as wrong.
    pub accuracy: f64,
    pub per_relation: Vec<RelationMetrics>,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Micro-averaged metrics plus a one-vs-rest table per class. `golds` and
/// `predictions` must cover the same instance ids, each exactly once.
pub fn compute_metrics(
    golds: &[(String, BucketKey)],
    predictions: &[Prediction],
) -> Result<EvalReport, RcError> {
    let mut gold_map: HashMap<&str, &BucketKey> = HashMap::new();
    for (id, k) in golds {
        if gold_map.insert(id.as_str(), k).is_some() {
            return Err(RcError::Alignment(format!("duplicate gold id {id}")));
        }
    }
    let mut seen = HashSet::new();
    for p in predictions {
        if !seen.insert(p.instance_id.as_str()) {
            return Err(RcError::Alignment(format!(
                "duplicate prediction id {}",
                p.instance_id
            )));
        }
        if !gold_map.contains_key(p.instance_id.as_str()) {
            return Err(RcError::Alignment(format!(
                "prediction {} has no gold",
                p.instance_id
            )));
        }
    }
    if seen.len() != gold_map.len() {
        return Err(RcError::Alignment(format!(
            "{} golds but {} predictions",
            gold_map.len(),
            seen.len()
        )));
    }

    let n = predictions.len();
    let mut correct = 0;
    let mut predicted = 0;
    let mut by_reason = BTreeMap::new();
    let mut table: BTreeMap<String, (usize, usize, usize, usize)> = BTreeMap::new();
    for p in predictions {
        let gold = gold_map[p.instance_id.as_str()];
        table.entry(gold.to_string()).or_default().0 += 1;
        match &p.label {
            Some(k) => {
                predicted += 1;
                if k == gold {
                    correct += 1;
                    table.entry(gold.to_string()).or_default().1 += 1;
                } else {
                    table.entry(k.to_string()).or_default().2 += 1;
                    table.entry(gold.to_string()).or_default().3 += 1;
                }
            }
            None => {
                *by_reason
                    .entry(p.unparseable.unwrap_or(UnparseableReason::NoLabel))
                    .or_insert(0) += 1;
                table.entry(gold.to_string()).or_default().3 += 1;
            }
        }
    }
    let precision = ratio(correct, predicted);
    let recall = ratio(correct, n);
    let per_relation = table
        .into_iter()
        .map(|(label, (support, tp, fp, fn_))| {
            let p = ratio(tp, tp + fp);
            let r = ratio(tp, tp + fn_);
            RelationMetrics {
                label,
                support,
                tp,
                fp,
                fn_,
                precision: p,
                recall: r,
                f1: harmonic(p, r),
            }
        })
        .collect();
    Ok(EvalReport {
        instances: n,
        correct,
        predicted,
        unparseable: n - predicted,
        unparseable_by_reason: by_reason,
        precision,
        recall,
        f1: harmonic(precision, recall),
        accuracy: ratio(correct, n),
        per_relation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{EntityType::*, RelationTuple, Split};

    fn registry() -> Registry {
        Registry::from_keys([
            BucketKey::new(Location, "administrativeDistrict", Location),
            BucketKey::new(Person, "spouse", Person),
        ])
    }

    fn instance() -> DatasetInstance {
        DatasetInstance::new(
            RelationTuple::new(
                "q1",
                "Altona",
                Location,
                "administrativeDistrict",
                "Hamburg",
                Location,
            )
            .unwrap(),
            "Altona is a district of Hamburg.".into(),
            Split::Test,
            vec!["gold".into()],
        )
        .unwrap()
    }

    #[test]
    fn zero_shot_layout() {
        let p = build_zero_shot_prompt(&instance(), &registry());
        assert!(p.contains(
            "Classify it into one of the following buckets: (Location, administrativeDistrict, Location), (Person, spouse, Person)\n"
        ));
        assert!(p.contains(
            "Sentence: Altona is a district of Hamburg.\nEntity1: Altona\nEntity2: Hamburg\nLabel:"
        ));
        for key in ["\"Entity_1_type\":", "\"Relation\":", "\"Entity_2_type\":"] {
            assert!(p.contains(key));
        }
        // The gold relation appears only inside the class list.
        assert_eq!(p.matches("administrativeDistrict").count(), 1);
    }

    #[test]
    fn few_shot_requires_disjoint_exemplars() {
        let inst = instance();
        assert_eq!(
            build_few_shot_cot_prompt(&inst, &registry(), &[]),
            Err(RcError::NoExemplars)
        );
        let mut leak = Exemplar::blankenese();
        leak.id = "q1".into();
        assert_eq!(
            build_few_shot_cot_prompt(&inst, &registry(), &[leak]),
            Err(RcError::ExemplarLeak("q1".into()))
        );
        let p = build_few_shot_cot_prompt(&inst, &registry(), &[Exemplar::blankenese()]).unwrap();
        assert_eq!(p.matches("Below is the example of the task:").count(), 1);
        assert!(p.contains("\"Reasoning\": \"Here Blankenese as well as Hamburg is a location"));
    }

    #[test]
    fn parse_cases() {
        let reg = registry();
        let ok = parse_label(
            "1",
            "Sure!\n```json\n{\"Entity_1_type\": \"Location\", \"Relation\": \"administrativeDistrict\", \"Entity_2_type\": \"Location\"}\n```",
            &reg,
        );
        assert_eq!(
            ok.label,
            Some(BucketKey::new(Location, "administrativeDistrict", Location))
        );
        let none = parse_label("2", "I cannot classify", &reg);
        assert_eq!(none.unparseable, Some(UnparseableReason::NoLabel));
        let outside = parse_label(
            "3",
            "{\"Entity_1_type\": \"Person\", \"Relation\": \"mentor\", \"Entity_2_type\": \"Person\"}",
            &reg,
        );
        assert_eq!(outside.unparseable, Some(UnparseableReason::NotInRegistry));
        let nested = parse_label(
            "4",
            "{\"answer\": {\"Reasoning\": \"x\", \"Entity_1_type\": \"Person\", \"Relation\": \"spouse\", \"Entity_2_type\": \"Person\"}}",
            &reg,
        );
        assert_eq!(nested.label, Some(BucketKey::new(Person, "spouse", Person)));
        assert_eq!(parse_label("5", "{{{{ \"unterminated", &reg).label, None);
    }

    fn pred(id: &str, label: Option<BucketKey>) -> Prediction {
        Prediction {
            instance_id: id.into(),
            raw: String::new(),
            unparseable: label.is_none().then_some(UnparseableReason::NoLabel),
            label,
        }
    }

    #[test]
    fn metrics_extremes() {
        let a = BucketKey::new(Location, "administrativeDistrict", Location);
        let b = BucketKey::new(Person, "spouse", Person);
        let golds = vec![("1".to_string(), a.clone()), ("2".to_string(), b.clone())];
        let all_right = compute_metrics(
            &golds,
            &[pred("1", Some(a.clone())), pred("2", Some(b.clone()))],
        )
        .unwrap();
        assert_eq!(
            (
                all_right.f1,
                all_right.precision,
                all_right.recall,
                all_right.accuracy
            ),
            (1.0, 1.0, 1.0, 1.0)
        );
        let all_wrong = compute_metrics(
            &golds,
            &[pred("1", Some(b.clone())), pred("2", Some(a.clone()))],
        )
        .unwrap();
        assert_eq!(
            (
                all_wrong.f1,
                all_wrong.precision,
                all_wrong.recall,
                all_wrong.accuracy
            ),
            (0.0, 0.0, 0.0, 0.0)
        );
        let abstain = compute_metrics(&golds, &[pred("1", Some(a)), pred("2", None)]).unwrap();
        assert_eq!((abstain.precision, abstain.accuracy), (1.0, 0.5));
        assert!(matches!(
            compute_metrics(&golds, &[pred("1", None)]),
            Err(RcError::Alignment(_))
        ));
    }
}
