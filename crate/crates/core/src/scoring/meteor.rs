//! METEOR with exact and stem matching stages.
//!
//! Score = Fmean · (1 − γ · frag^β) with Fmean = P·R / (α·P + (1 − α)·R).
//! Fragmentation is (chunks − 1) / (matches − 1), so a single contiguous alignment
//! (in particular an identical sentence) carries no penalty and scores exactly 1.

use rust_stemmers::{Algorithm, Stemmer};

use super::ScoreError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeteorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            beta: 3.0,
            gamma: 0.5,
        }
    }
}

/// Extra matching stage run after exact and stem matching, e.g. a WordNet lookup.
pub trait SynonymMatcher: Send + Sync {
    fn matches(&self, candidate: &str, reference: &str) -> bool;
}

#[derive(Default)]
pub struct Meteor {
    pub params: MeteorParams,
    pub synonyms: Option<Box<dyn SynonymMatcher>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeteorDetail {
    pub score: f64,
    pub matches: usize,
    pub chunks: usize,
    pub precision: f64,
    pub recall: f64,
    pub fmean: f64,
    pub penalty: f64,
}

impl Meteor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_synonyms(mut self, m: Box<dyn SynonymMatcher>) -> Self {
        self.synonyms = Some(m);
        self
    }

    pub fn score(&self, candidate: &[String], reference: &[String]) -> Result<f64, ScoreError> {
        self.detail(candidate, reference).map(|d| d.score)
    }

    pub fn detail(
        &self,
        candidate: &[String],
        reference: &[String],
    ) -> Result<MeteorDetail, ScoreError> {
        if reference.is_empty() {
            return Err(ScoreError::EmptyInput);
        }
        let alignment = self.align(candidate, reference);
        let m = alignment.len();
        if m == 0 {
            return Ok(MeteorDetail {
                score: 0.0,
                matches: 0,
                chunks: 0,
                precision: 0.0,
                recall: 0.0,
                fmean: 0.0,
                penalty: 0.0,
            });
        }
        let chunks = count_chunks(&alignment);
        let p = m as f64 / candidate.len() as f64;
        let r = m as f64 / reference.len() as f64;
        let MeteorParams { alpha, beta, gamma } = self.params;
        let fmean = p * r / (alpha * p + (1.0 - alpha) * r);
        let frag = if m <= 1 {
            0.0
        } else {
            (chunks - 1) as f64 / (m - 1) as f64
        };
        let penalty = gamma * frag.powf(beta);
        Ok(MeteorDetail {
            score: (fmean * (1.0 - penalty)).clamp(0.0, 1.0),
            matches: m,
            chunks,
            precision: p,
            recall: r,
            fmean,
            penalty,
        })
    }

    /// `(candidate index, reference index)` pairs sorted by candidate index.
    pub fn align(&self, candidate: &[String], reference: &[String]) -> Vec<(usize, usize)> {
        let mut cand_used: Vec<Option<usize>> = vec![None; candidate.len()];
        let mut ref_used = vec![false; reference.len()];

        run_stage(
            candidate,
            reference,
            &mut cand_used,
            &mut ref_used,
            |a, b| a == b,
        );

        let stemmer = Stemmer::create(Algorithm::English);
        let cs: Vec<String> = candidate
            .iter()
            .map(|t| stemmer.stem(t).into_owned())
            .collect();
        let rs: Vec<String> = reference
            .iter()
            .map(|t| stemmer.stem(t).into_owned())
            .collect();
        run_stage(&cs, &rs, &mut cand_used, &mut ref_used, |a, b| a == b);

        if let Some(syn) = &self.synonyms {
            run_stage(
                candidate,
                reference,
                &mut cand_used,
                &mut ref_used,
                |a, b| syn.matches(a, b),
            );
        }

        cand_used
            .iter()
            .enumerate()
            .filter_map(|(i, j)| j.map(|j| (i, j)))
            .collect()
    }
}

/// Greedy left-to-right alignment of still-unmatched tokens. Among eligible
/// reference positions, prefer the one extending the previous candidate token's
/// alignment, then one whose successor also matches, then the earliest.
fn run_stage(
    cand: &[String],
    refs: &[String],
    cand_used: &mut [Option<usize>],
    ref_used: &mut [bool],
    eq: impl Fn(&str, &str) -> bool,
) {
    for i in 0..cand.len() {
        if cand_used[i].is_some() {
            continue;
        }
        let eligible: Vec<usize> = (0..refs.len())
            .filter(|&j| !ref_used[j] && eq(&cand[i], &refs[j]))
            .collect();
        if eligible.is_empty() {
            continue;
        }
        let prev = i.checked_sub(1).and_then(|p| cand_used[p]);
        let extends = prev.and_then(|p| eligible.iter().copied().find(|&j| j == p + 1));
        let lookahead = || {
            eligible.iter().copied().find(|&j| {
                i + 1 < cand.len()
                    && j + 1 < refs.len()
                    && !ref_used[j + 1]
                    && eq(&cand[i + 1], &refs[j + 1])
            })
        };
        let j = extends.or_else(lookahead).unwrap_or(eligible[0]);
        cand_used[i] = Some(j);
        ref_used[j] = true;
    }
}

/// Runs of alignments that are contiguous in both sentences.
fn count_chunks(alignment: &[(usize, usize)]) -> usize {
    if alignment.is_empty() {
        return 0;
    }
    1 + alignment
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

/// METEOR with default parameters and no synonym stage.
pub fn meteor(candidate: &[String], reference: &[String]) -> Result<f64, ScoreError> {
    Meteor::new().score(candidate, reference)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::tokenize;

    fn m(c: &str, r: &str) -> f64 {
        meteor(&tokenize(c), &tokenize(r)).unwrap()
    }

    #[test]
    fn identity_and_disjoint() {
        assert_eq!(
            m(
                "Marie Curie was born in Warsaw.",
                "Marie Curie was born in Warsaw."
            ),
            1.0
        );
        assert_eq!(m("alpha beta", "gamma delta"), 0.0);
        assert_eq!(meteor(&tokenize("a"), &[]), Err(ScoreError::EmptyInput));
    }

    #[test]
    fn chunk_break_hand_value() {
        // 6 matches in 2 chunks: frag = 1/5, penalty = 0.5 * 0.008.
        let d = Meteor::new()
            .detail(
                &tokenize("the cat sat on the mat"),
                &tokenize("on the mat the cat sat"),
            )
            .unwrap();
        assert_eq!((d.matches, d.chunks), (6, 2));
        assert!((d.score - 0.996).abs() < 1e-12);
    }

    #[test]
    fn stem_stage() {
        let d = Meteor::new()
            .detail(
                &tokenize("the dogs were running"),
                &tokenize("the dog runs"),
            )
            .unwrap();
        assert_eq!((d.matches, d.chunks), (3, 2));
        let fmean = 0.75 / (0.9 * 0.75 + 0.1);
        assert!((d.score - fmean * (1.0 - 0.5 * 0.125)).abs() < 1e-12);
    }

    struct Colour;
    impl SynonymMatcher for Colour {
        fn matches(&self, a: &str, b: &str) -> bool {
            matches!((a, b), ("colour", "color") | ("color", "colour"))
        }
    }

    #[test]
    fn synonym_stage_is_pluggable() {
        let c = tokenize("the colour red");
        let r = tokenize("the color red");
        assert!(meteor(&c, &r).unwrap() < 1.0);
        let with = Meteor::new().with_synonyms(Box::new(Colour));
        assert_eq!(with.score(&c, &r).unwrap(), 1.0);
    }
}
