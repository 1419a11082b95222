//! Dale-Chall readability (used for ranking) and Flesch-Kincaid grade (report only).

use std::collections::HashSet;
use std::sync::OnceLock;

use super::ScoreError;

const EASY_WORDS: &str = include_str!("../../data/dale_chall_easy_words.txt");

pub fn easy_words() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| {
        EASY_WORDS
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect()
    })
}

/// Words of `text`: whitespace tokens with surrounding punctuation removed,
/// lowercased. Tokens with no alphanumeric character are skipped.
pub fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric())
                .to_lowercase()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Number of sentences: runs of text terminated by `.`, `!` or `?` (or the end)
/// that contain at least one word. Never less than 1 for text with words.
pub fn sentence_count(text: &str) -> usize {
    let n = text
        .split(['.', '!', '?'])
        .filter(|s| s.chars().any(char::is_alphanumeric))
        .count();
    n.max(1)
}

/// A word is difficult when it is not on the easy list. Words without letters
/// (numbers) count as easy.
pub fn is_difficult(word: &str) -> bool {
    word.chars().any(char::is_alphabetic) && !easy_words().contains(word)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaleChallDetail {
    pub score: f64,
    pub words: usize,
    pub sentences: usize,
    pub difficult: usize,
}

pub fn dale_chall_detail(text: &str) -> Result<DaleChallDetail, ScoreError> {
    let ws = words(text);
    if ws.is_empty() {
        return Err(ScoreError::EmptyText);
    }
    let sentences = sentence_count(text);
    let difficult = ws.iter().filter(|w| is_difficult(w)).count();
    let pdw = 100.0 * difficult as f64 / ws.len() as f64;
    let asl = ws.len() as f64 / sentences as f64;
    let mut score = 0.1579 * pdw + 0.0496 * asl;
    if pdw > 5.0 {
        score += 3.6365;
    }
    Ok(DaleChallDetail {
        score,
        words: ws.len(),
        sentences,
        difficult,
    })
}

/// Dale-Chall index: 0.1579·PDW + 0.0496·ASL, plus 3.6365 when PDW > 5, where PDW is
/// the percentage of difficult words and ASL the mean sentence length in words.
pub fn dale_chall(text: &str) -> Result<f64, ScoreError> {
    dale_chall_detail(text).map(|d| d.score)
}

/// Vowel-group syllable estimate with a silent final `e`.
pub fn syllables(word: &str) -> usize {
    let w: Vec<char> = word
        .to_lowercase()
        .chars()
        .filter(|c| c.is_alphabetic())
        .collect();
    if w.is_empty() {
        return 0;
    }
    let vowel = |c: char| "aeiouy".contains(c);
    let mut count = 0;
    let mut prev = false;
    for &c in &w {
        let v = vowel(c);
        if v && !prev {
            count += 1;
        }
        prev = v;
    }
    let n = w.len();
    if n > 2 && w[n - 1] == 'e' && !vowel(w[n - 2]) && !(w[n - 2] == 'l' && !vowel(w[n - 3])) {
        count -= 1;
    }
    count.max(1)
}

/// Flesch-Kincaid grade: 0.39·ASL + 11.8·ASW − 15.59.
pub fn flesch_kincaid_grade(text: &str) -> Result<f64, ScoreError> {
    let ws = words(text);
    if ws.is_empty() {
        return Err(ScoreError::EmptyText);
    }
    let asl = ws.len() as f64 / sentence_count(text) as f64;
    let asw = ws.iter().map(|w| syllables(w)).sum::<usize>() as f64 / ws.len() as f64;
    Ok(0.39 * asl + 11.8 * asw - 15.59)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_loaded() {
        assert!(easy_words().len() > 2900);
        assert!(easy_words().contains("house"));
        assert!(!easy_words().contains("ocelot"));
    }

    #[test]
    fn all_easy_single_sentence() {
        let d = dale_chall_detail("The cat and the dog ran to the big house.").unwrap();
        assert_eq!((d.words, d.sentences, d.difficult), (10, 1, 0));
        assert!((d.score - 0.496).abs() < 1e-12);
    }

    #[test]
    fn two_difficult_words() {
        let v = dale_chall("The ocelot and the dog ran to the big mansion.").unwrap();
        assert!((v - (0.1579 * 20.0 + 0.0496 * 10.0 + 3.6365)).abs() < 1e-12);
    }

    #[test]
    fn empty_text() {
        assert_eq!(dale_chall("  ... "), Err(ScoreError::EmptyText));
    }

    #[test]
    fn syllable_estimates() {
        assert_eq!(syllables("cat"), 1);
        assert_eq!(syllables("table"), 2);
        assert_eq!(syllables("house"), 1);
        assert_eq!(syllables("administrative"), 5);
    }
}
