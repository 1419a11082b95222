//! Aligns sentences from a batched generation call back to their tuples.
//!
//! A sentence belongs to a tuple iff it contains both entity surfaces as exact,
//! case-sensitive substrings. Anything that cannot be aligned one-to-one is dropped
//! and counted, so every retained pair contains its entities verbatim.

use serde::{Deserialize, Serialize};

use crate::types::RelationTuple;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropReport {
    /// Sentences that matched no tuple.
    pub unmatched_sentences: usize,
    /// Sentences that matched two or more tuples.
    pub ambiguous_sentences: usize,
    /// Sentences that matched a tuple already claimed by an earlier sentence.
    pub duplicate_sentences: usize,
    /// Tuples left without a sentence.
    pub unmatched_tuples: usize,
}

impl DropReport {
    pub fn sentences_dropped(&self) -> usize {
        self.unmatched_sentences + self.ambiguous_sentences + self.duplicate_sentences
    }

    pub fn is_clean(&self) -> bool {
        self.sentences_dropped() == 0 && self.unmatched_tuples == 0
    }

    pub fn absorb(&mut self, other: &DropReport) {
        self.unmatched_sentences += other.unmatched_sentences;
        self.ambiguous_sentences += other.ambiguous_sentences;
        self.duplicate_sentences += other.duplicate_sentences;
        self.unmatched_tuples += other.unmatched_tuples;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mapping {
    /// Retained pairs, in the order of the input tuples.
    pub pairs: Vec<(RelationTuple, String)>,
    pub report: DropReport,
}

pub fn map_batch_output(sentences: &[String], tuples: &[RelationTuple]) -> Mapping {
    let mut report = DropReport::default();
    let mut claimed: Vec<Option<usize>> = vec![None; tuples.len()];

    for (si, sentence) in sentences.iter().enumerate() {
        let mut hits = tuples
            .iter()
            .enumerate()
            .filter(|(_, t)| t.entities_in(sentence))
            .map(|(ti, _)| ti);
        match (hits.next(), hits.next()) {
            (None, _) => report.unmatched_sentences += 1,
            (Some(_), Some(_)) => {
                log::debug!("ambiguous sentence dropped: {sentence}");
                report.ambiguous_sentences += 1;
            }
            (Some(ti), None) => {
                if claimed[ti].is_some() {
                    report.duplicate_sentences += 1;
                } else {
                    claimed[ti] = Some(si);
                }
            }
        }
    }

    let mut pairs = Vec::new();
    for (ti, slot) in claimed.into_iter().enumerate() {
        match slot {
            Some(si) => pairs.push((tuples[ti].clone(), sentences[si].clone())),
            None => report.unmatched_tuples += 1,
        }
    }
    Mapping { pairs, report }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::EntityType::*;

    fn t(id: &str, e1: &str, e2: &str) -> RelationTuple {
        RelationTuple::new(id, e1, Location, "administrativeDistrict", e2, Location).unwrap()
    }

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn reversed_mention_still_maps() {
        let tuples = [t("1", "Blankenese", "Hamburg")];
        let m = map_batch_output(
            &s(&["Hamburg is the administrative district of Blankenese."]),
            &tuples,
        );
        assert_eq!(m.pairs.len(), 1);
        assert!(m.report.is_clean());
    }

    #[test]
    fn single_entity_is_dropped() {
        let tuples = [t("1", "Blankenese", "Hamburg")];
        let m = map_batch_output(&s(&["Blankenese is lovely."]), &tuples);
        assert!(m.pairs.is_empty());
        assert_eq!(m.report.unmatched_sentences, 1);
        assert_eq!(m.report.unmatched_tuples, 1);
    }

    #[test]
    fn hand_traced_three_sentences_two_tuples() {
        // s0 -> tuple 2, s1 -> nothing, s2 -> tuple 1.
        let tuples = [t("1", "Altona", "Hamburg"), t("2", "Pankow", "Berlin")];
        let m = map_batch_output(
            &s(&[
                "Pankow lies in Berlin.",
                "A quiet town by the sea.",
                "Altona is part of Hamburg.",
            ]),
            &tuples,
        );
        assert_eq!(m.pairs.len(), 2);
        assert_eq!(m.pairs[0].0.id, "1");
        assert_eq!(m.pairs[0].1, "Altona is part of Hamburg.");
        assert_eq!(m.report.sentences_dropped(), 1);
        assert_eq!(m.report.unmatched_tuples, 0);
    }

    #[test]
    fn merged_sentence_is_ambiguous() {
        let tuples = [t("1", "Altona", "Hamburg"), t("2", "Pankow", "Berlin")];
        let m = map_batch_output(
            &s(&["Altona is part of Hamburg, and Pankow lies in Berlin."]),
            &tuples,
        );
        assert!(m.pairs.is_empty());
        assert_eq!(m.report.ambiguous_sentences, 1);
        assert_eq!(m.report.unmatched_tuples, 2);
    }

    #[test]
    fn case_sensitive_match() {
        let tuples = [t("1", "Altona", "Hamburg")];
        let m = map_batch_output(&s(&["altona is part of hamburg."]), &tuples);
        assert!(m.pairs.is_empty());
    }

    #[test]
    fn second_sentence_for_same_tuple_is_dropped() {
        let tuples = [t("1", "Altona", "Hamburg")];
        let m = map_batch_output(
            &s(&["Altona is in Hamburg.", "Hamburg contains Altona."]),
            &tuples,
        );
        assert_eq!(m.pairs[0].1, "Altona is in Hamburg.");
        assert_eq!(m.report.duplicate_sentences, 1);
    }
}
