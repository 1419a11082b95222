//! Zero-shot and few-shot chain-of-thought classification prompts.

use serde::{Deserialize, Serialize};

use super::RcError;
use crate::registry::Registry;
use crate::types::{BucketKey, DatasetInstance, EntityType};

const TASK_INTRO: &str = "Your task is to classify the relationship between two entities mentioned in a sentence.\n\
The entities will be provided to you along with the sentence.\n\
Your goal is to identify the relation between those 2 entities and the type of the 2 entities to find the unique tuple: (Entity_1_type, Relation, Entity_2_type)\n";

const CLASSIFY_LINE: &str = "Classify the following sentence into one of the above relation tuples, and only output the class in json format which should be from one of the above classes";

/// Registry classes as `(t1, r, t2)` joined by `, `, in registry order.
pub fn render_classes(registry: &Registry) -> String {
    registry
        .iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn query_block(sentence: &str, e1: &str, e2: &str) -> String {
    format!("Sentence: {sentence}\nEntity1: {e1}\nEntity2: {e2}\nLabel:")
}

pub fn build_zero_shot_prompt(instance: &DatasetInstance, registry: &Registry) -> String {
    let t = &instance.tuple;
    format!(
        "{TASK_INTRO}Classify it into one of the following buckets: {}\n{CLASSIFY_LINE}:\n\n{}\n\n\
         {{\n    \"Entity_1_type\":\n    \"Relation\":\n    \"Entity_2_type\":\n}}",
        render_classes(registry),
        query_block(&instance.sentence, &t.e1, &t.e2),
    )
}

/// A worked example for the few-shot prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    /// Instance id the example was drawn from; must differ from every query id.
    pub id: String,
    pub sentence: String,
    pub e1: String,
    pub e2: String,
    pub reasoning: String,
    pub label: BucketKey,
}

impl Exemplar {
    /// The standard worked example.
    pub fn blankenese() -> Self {
        Self {
            id: "exemplar-blankenese".into(),
            sentence: "Hamburg is the administrative district of Blankenese.".into(),
            e1: "Blankenese".into(),
            e2: "Hamburg".into(),
            reasoning: "Here Blankenese as well as Hamburg is a location and Hamburg is administrative district of Blankenese so the relation between the entity is administrativeDistrict.".into(),
            label: BucketKey::new(EntityType::Location, "administrativeDistrict", EntityType::Location),
        }
    }

    fn render(&self) -> String {
        let esc = |s: &str| serde_json::to_string(s).expect("string");
        format!(
            "{}\n\n{{\n    \"Reasoning\": {},\n    \"Entity_1_type\": {},\n    \"Relation\": {},\n    \"Entity_2_type\": {}\n}}",
            query_block(&self.sentence, &self.e1, &self.e2),
            esc(&self.reasoning),
            esc(self.label.t1.as_str()),
            esc(&self.label.r),
            esc(self.label.t2.as_str()),
        )
    }
}

pub fn build_few_shot_cot_prompt(
    instance: &DatasetInstance,
    registry: &Registry,
    exemplars: &[Exemplar],
) -> Result<String, RcError> {
    let Some((first, more)) = exemplars.split_first() else {
        return Err(RcError::NoExemplars);
    };
    if let Some(e) = exemplars.iter().find(|e| e.id == instance.tuple.id) {
        return Err(RcError::ExemplarLeak(e.id.clone()));
    }
    let t = &instance.tuple;
    let mut p = format!(
        "{TASK_INTRO}Classify it into one of the following buckets:\n{}\n\nBelow is the example of the task:\n\n{}\n\n",
        render_classes(registry),
        first.render()
    );
    for e in more {
        p.push_str(&e.render());
        p.push_str("\n\n");
    }
    p.push_str(&format!(
        "{CLASSIFY_LINE}. Also provide thorough reasoning in the reason key for your classification.:\n\n{}\n\
         {{\n    \"Reasoning\":\n    \"Entity_1_type\":\n    \"Relation\":\n    \"Entity_2_type\":\n}}",
        query_block(&instance.sentence, &t.e1, &t.e2)
    ));
    Ok(p)
}
