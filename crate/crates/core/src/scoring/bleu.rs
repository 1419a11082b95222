//! BLEU with uniform n-gram weights.
//!
//! Counting conventions follow the widely used NLTK implementation: per-sentence
//! precision denominators are floored at 1, and the brevity penalty compares total
//! candidate length with total reference length.

use std::collections::HashMap;

use super::ScoreError;

type Counts<'a> = HashMap<&'a [String], usize>;

fn ngram_counts(tokens: &[String], n: usize) -> Counts<'_> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped matches and the (floored) candidate n-gram count of one pair.
fn modified_precision(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refc = ngram_counts(reference, n);
    let matched = cand
        .iter()
        .map(|(g, c)| (*c).min(refc.get(g).copied().unwrap_or(0)))
        .sum();
    let total: usize = cand.values().sum();
    (matched, total.max(1))
}

fn brevity_penalty(cand_len: usize, ref_len: usize) -> f64 {
    if cand_len > ref_len {
        1.0
    } else if cand_len == 0 {
        0.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    }
}

fn check(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    max_n: usize,
) -> Result<(), ScoreError> {
    if candidates.is_empty() || max_n == 0 {
        return Err(ScoreError::EmptyInput);
    }
    if candidates.len() != references.len() {
        return Err(ScoreError::LengthMismatch {
            left: candidates.len(),
            right: references.len(),
        });
    }
    Ok(())
}

fn combine(precisions: &[f64], bp: f64) -> f64 {
    let w = 1.0 / precisions.len() as f64;
    let log_sum: f64 = precisions.iter().map(|p| w * p.ln()).sum();
    (bp * log_sum.exp()).clamp(0.0, 1.0)
}

/// Corpus-level BLEU over aligned candidate/reference token lists.
///
/// Any n-gram order without a single match gives 0.
pub fn corpus_bleu(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    max_n: usize,
) -> Result<f64, ScoreError> {
    check(candidates, references, max_n)?;
    let mut num = vec![0usize; max_n];
    let mut den = vec![0usize; max_n];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        for n in 1..=max_n {
            let (m, t) = modified_precision(c, r, n);
            num[n - 1] += m;
            den[n - 1] += t;
        }
        c_len += c.len();
        r_len += r.len();
    }
    if num.contains(&0) {
        return Ok(0.0);
    }
    let precisions: Vec<f64> = num
        .iter()
        .zip(&den)
        .map(|(&m, &t)| m as f64 / t as f64)
        .collect();
    Ok(combine(&precisions, brevity_penalty(c_len, r_len)))
}

/// Sentence BLEU with add-one smoothing on the n > 1 precisions, used for ranking
/// where most short sentences have no 4-gram match.
pub fn sentence_bleu_smoothed(
    candidate: &[String],
    reference: &[String],
    max_n: usize,
) -> Result<f64, ScoreError> {
    if max_n == 0 || reference.is_empty() {
        return Err(ScoreError::EmptyInput);
    }
    let mut precisions = Vec::with_capacity(max_n);
    for n in 1..=max_n {
        let (m, t) = modified_precision(candidate, reference, n);
        if n == 1 {
            if m == 0 {
                return Ok(0.0);
            }
            precisions.push(m as f64 / t as f64);
        } else {
            precisions.push((m + 1) as f64 / (t + 1) as f64);
        }
    }
    Ok(combine(
        &precisions,
        brevity_penalty(candidate.len(), reference.len()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::tokenize;

    #[test]
    fn identity_is_one() {
        let t = tokenize("Berlin is the capital of Germany.");
        assert_eq!(
            corpus_bleu(std::slice::from_ref(&t), std::slice::from_ref(&t), 4).unwrap(),
            1.0
        );
        assert!((sentence_bleu_smoothed(&t, &t, 4).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn no_overlap_is_zero() {
        let a = tokenize("alpha beta gamma delta");
        let b = tokenize("one two three four");
        assert_eq!(
            corpus_bleu(std::slice::from_ref(&a), std::slice::from_ref(&b), 4).unwrap(),
            0.0
        );
        assert_eq!(sentence_bleu_smoothed(&a, &b, 4).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        assert_eq!(corpus_bleu(&[], &[], 4), Err(ScoreError::EmptyInput));
        let a = tokenize("a");
        assert!(matches!(
            corpus_bleu(std::slice::from_ref(&a), &[], 4),
            Err(ScoreError::LengthMismatch { .. })
        ));
        assert_eq!(
            corpus_bleu(std::slice::from_ref(&a), std::slice::from_ref(&a), 0),
            Err(ScoreError::EmptyInput)
        );
    }

    #[test]
    fn brevity_penalty_hand_value() {
        // 3 of 3 unigrams match, reference is 6 long: exp(1 - 6/3).
        let c = tokenize("a b c");
        let r = tokenize("a b c d e f");
        let v = corpus_bleu(&[c], &[r], 1).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
    }
}
