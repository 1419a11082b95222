//! Shared fixtures and independent oracles for the metric and evaluation tests.
#![allow(dead_code, clippy::excessive_precision)]

use relgen_core::rc_eval::Prediction;
use relgen_core::types::BucketKey;

/// (candidate, reference) pairs for BLEU parity.
pub const BLEU_PAIRS: [(&str, &str); 20] = [
    (
        "Blankenese is an administrative district in Hamburg.",
        "Blankenese is an administrative district of Hamburg.",
    ),
    (
        "Hamburg is the administrative district of Blankenese.",
        "Blankenese lies within the administrative district of Hamburg.",
    ),
    (
        "Marie Curie was born in Warsaw, Poland.",
        "Marie Curie was born in the city of Warsaw.",
    ),
    (
        "The company Acme Corp is headquartered in Springfield.",
        "Acme Corp has its headquarters in Springfield.",
    ),
    (
        "John Smith succeeded Jane Doe as mayor.",
        "Jane Doe was succeeded by John Smith as mayor.",
    ),
    (
        "Oxford University is located in Oxford, England.",
        "Oxford University is located in Oxford.",
    ),
    (
        "The river flows through the old town of Dresden.",
        "The river Elbe flows through Dresden.",
    ),
    (
        "Ada Lovelace worked with Charles Babbage.",
        "Ada Lovelace collaborated with Charles Babbage on the engine.",
    ),
    (
        "Toyota was founded by Kiichiro Toyoda.",
        "Kiichiro Toyoda founded Toyota.",
    ),
    (
        "Berlin is the capital of Germany.",
        "Berlin is the capital city of Germany.",
    ),
    (
        "The band Queen was formed in London.",
        "Queen, the band, was formed in London in 1970.",
    ),
    (
        "Nairobi is a city in Kenya.",
        "Nairobi is the capital of Kenya.",
    ),
    (
        "Alan Turing studied at King's College.",
        "Alan Turing was a student at King's College, Cambridge.",
    ),
    (
        "The museum is owned by the city council.",
        "The city council owns the museum.",
    ),
    (
        "Lisbon lies on the Tagus river.",
        "Lisbon is located on the river Tagus.",
    ),
    (
        "Pablo Picasso was a member of the Communist Party.",
        "Picasso joined the Communist Party.",
    ),
    (
        "Mount Kenya is located in Kenya.",
        "Mount Kenya is located in Kenya.",
    ),
    (
        "The treaty was signed in Paris by both nations.",
        "Both nations signed the treaty in Paris.",
    ),
    (
        "Greta Garbo starred alongside John Gilbert.",
        "John Gilbert starred with Greta Garbo in several films.",
    ),
    (
        "Siemens has its headquarters in Munich, Germany.",
        "The headquarters of Siemens is in Munich.",
    ),
];

// Values produced by NLTK 3.x `corpus_bleu` / `sentence_bleu` (smoothing method 2)
// on BLEU_PAIRS under the same tokenization, recorded before the implementation.
pub const REF_CORPUS_BLEU_20: f64 = 0.3241158723894994;
pub const REF_CORPUS_BLEU_10: f64 = 0.37566209183704968;
pub const REF_CORPUS_BLEU_20_BIGRAM: f64 = 0.57745784879290363;
pub const REF_SENTENCE_SMOOTHED: [f64; 5] = [
    0.65803700647624619,
    0.44124845129229767,
    0.49361587529375656,
    0.30644090507497279,
    0.32347562464306545,
];

fn ngrams(tokens: &[String], n: usize) -> Vec<Vec<String>> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n)
        .map(|i| tokens[i..i + n].to_vec())
        .collect()
}

fn count(list: &[Vec<String>], g: &[String]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

/// Clipped n-gram matches by exhaustive scan over distinct candidate n-grams.
fn clipped(c: &[String], r: &[String], n: usize) -> (usize, usize) {
    let cg = ngrams(c, n);
    let rg = ngrams(r, n);
    let mut distinct: Vec<Vec<String>> = Vec::new();
    for g in &cg {
        if !distinct.contains(g) {
            distinct.push(g.clone());
        }
    }
    let matched = distinct
        .iter()
        .map(|g| count(&cg, g).min(count(&rg, g)))
        .sum();
    (matched, cg.len().max(1))
}

/// Straight-line BLEU: corpus sums of clipped counts, geometric mean, brevity penalty.
pub fn brute_corpus_bleu(c: &[Vec<String>], r: &[Vec<String>], max_n: usize) -> f64 {
    let mut logs = 0.0;
    for n in 1..=max_n {
        let (mut m, mut t) = (0, 0);
        for (ci, ri) in c.iter().zip(r) {
            let (a, b) = clipped(ci, ri, n);
            m += a;
            t += b;
        }
        if m == 0 {
            return 0.0;
        }
        logs += (m as f64 / t as f64).ln() / max_n as f64;
    }
    let cl: usize = c.iter().map(Vec::len).sum();
    let rl: usize = r.iter().map(Vec::len).sum();
    let bp = if cl > rl {
        1.0
    } else {
        (1.0 - rl as f64 / cl as f64).exp()
    };
    bp * logs.exp()
}

/// METEOR from alignment statistics:
/// Fmean = PR/(0.9P + 0.1R), penalty = 0.5·((chunks−1)/(m−1))³.
pub fn meteor_formula(matches: usize, cand_len: usize, ref_len: usize, chunks: usize) -> f64 {
    if matches == 0 {
        return 0.0;
    }
    let p = matches as f64 / cand_len as f64;
    let r = matches as f64 / ref_len as f64;
    let fmean = p * r / (0.9 * p + 0.1 * r);
    let frag = if matches == 1 {
        0.0
    } else {
        (chunks - 1) as f64 / (matches - 1) as f64
    };
    fmean * (1.0 - 0.5 * frag.powi(3))
}

/// (candidate, reference, matches, chunks) with counts worked out by hand.
pub const METEOR_CASES: [(&str, &str, usize, usize); 5] = [
    (
        "Marie Curie was born in Warsaw.",
        "Marie Curie was born in Warsaw.",
        7,
        1,
    ),
    ("the cat sat on the mat", "on the mat the cat sat", 6, 2),
    ("a b c d", "a b x y z", 2, 1),
    // exact: the; stem: dogs~dog, running~runs.
    ("the dogs were running", "the dog runs", 3, 2),
    ("x a y b", "a b", 2, 2),
];

/// Dale-Chall from hand counts: words, difficult words, sentences.
pub fn dale_chall_formula(words: usize, difficult: usize, sentences: usize) -> f64 {
    let pdw = 100.0 * difficult as f64 / words as f64;
    let asl = words as f64 / sentences as f64;
    0.1579 * pdw + 0.0496 * asl + if pdw > 5.0 { 3.6365 } else { 0.0 }
}

/// (text, words, difficult, sentences); "ocelot" and "mansion" are off the easy list.
pub const DALE_CHALL_CASES: [(&str, usize, usize, usize); 5] = [
    ("The cat and the dog ran to the big house.", 10, 0, 1),
    ("The ocelot and the dog ran to the big mansion.", 10, 2, 1),
    ("The dog ran home. The cat sat on the mat.", 10, 0, 2),
    (
        "A boy saw a red ball in the park with his friend and we went down the old green ocelot.",
        20,
        1,
        1,
    ),
    (
        "A boy saw a red ball in the park with his friend and we went down the old road by the hill and the ocelot.",
        25,
        1,
        1,
    ),
];

pub struct Confusion {
    pub n: usize,
    pub correct: usize,
    pub predicted: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// Builds the full gold × predicted count matrix (with an extra column for no
/// prediction) and reads the micro metrics off it.
pub fn brute_confusion(golds: &[(String, BucketKey)], preds: &[Prediction]) -> Confusion {
    let mut labels: Vec<BucketKey> = Vec::new();
    for (_, g) in golds {
        if !labels.contains(g) {
            labels.push(g.clone());
        }
    }
    for p in preds {
        if let Some(k) = &p.label {
            if !labels.contains(k) {
                labels.push(k.clone());
            }
        }
    }
    let l = labels.len();
    let mut matrix = vec![vec![0usize; l + 1]; l];
    for (id, g) in golds {
        let p = preds
            .iter()
            .find(|p| &p.instance_id == id)
            .expect("aligned");
        let gi = labels.iter().position(|x| x == g).unwrap();
        let pi = match &p.label {
            Some(k) => labels.iter().position(|x| x == k).unwrap(),
            None => l,
        };
        matrix[gi][pi] += 1;
    }
    let n: usize = matrix.iter().flatten().sum();
    let correct: usize = (0..l).map(|i| matrix[i][i]).sum();
    let predicted: usize = matrix
        .iter()
        .map(|row| row[..l].iter().sum::<usize>())
        .sum();
    let precision = if predicted == 0 {
        0.0
    } else {
        correct as f64 / predicted as f64
    };
    let recall = if n == 0 {
        0.0
    } else {
        correct as f64 / n as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Confusion {
        n,
        correct,
        predicted,
        precision,
        recall,
        f1,
        accuracy: recall,
    }
}
