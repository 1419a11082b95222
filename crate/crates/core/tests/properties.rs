mod common;

use common::brute_confusion;
use proptest::prelude::*;
use relgen_core::backend::mock::{MockCorrector, MockEmbedder};
use relgen_core::generation::mapping::map_batch_output;
use relgen_core::ranking::{normalize, rank_all, Priority, WeightConfig};
use relgen_core::rc_eval::{compute_metrics, parse_label, Prediction};
use relgen_core::registry::Registry;
use relgen_core::scoring::meteor::Meteor;
use relgen_core::scoring::readability::{dale_chall, dale_chall_detail};
use relgen_core::scoring::{
    corpus_bleu, grammar_score, has_from_classes, sentence_bleu_smoothed, tokenize, Metric,
    ScoreVector, SentimentClass,
};
use relgen_core::types::{BucketKey, CandidateSentence, EntityType, RelationTuple};

const VOCAB: &[&str] = &[
    "the", "city", "river", "was", "born", "in", "located", "of", "capital", "Paris", "Anna",
    "founded", "by", "company", "runs", "running", "a", "is", "near", "mansion",
];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(VOCAB), 1..12).prop_map(|w| w.join(" ") + ".")
}

proptest! {
    #[test]
    fn text_metrics_stay_in_range(c in sentence(), r in sentence()) {
        let (ct, rt) = (tokenize(&c), tokenize(&r));
        let b = sentence_bleu_smoothed(&ct, &rt, 4).unwrap();
        let cb = corpus_bleu(std::slice::from_ref(&ct), std::slice::from_ref(&rt), 4).unwrap();
        let m = Meteor::new().score(&ct, &rt).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
        prop_assert!((0.0..=1.0).contains(&cb));
        prop_assert!((0.0..=1.0).contains(&m));
        prop_assert!(dale_chall(&c).unwrap() >= 0.0);
        let g = grammar_score(&c, &MockCorrector, &MockEmbedder::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&g));
    }

    #[test]
    fn identity_scores_are_maximal(c in sentence()) {
        let t = tokenize(&c);
        prop_assert!((Meteor::new().score(&t, &t).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((corpus_bleu(std::slice::from_ref(&t), std::slice::from_ref(&t), 1).unwrap() - 1.0).abs() < 1e-12);
        // Below four tokens the empty higher orders are smoothed to 1/2, not 1.
        if t.len() >= 4 {
            prop_assert!((sentence_bleu_smoothed(&t, &t, 4).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn has_is_symmetric_and_bounded(a in 0i64..3, b in 0i64..3) {
        let (x, y) = (SentimentClass::new(a).unwrap(), SentimentClass::new(b).unwrap());
        let h = has_from_classes(x, y);
        prop_assert_eq!(h, has_from_classes(y, x));
        prop_assert!((-2..=0).contains(&h));
        prop_assert_eq!(h == 0, a == b);
    }

    #[test]
    fn dale_chall_rises_with_hard_words(n_easy in 3usize..30, n_hard in 0usize..5) {
        let mut words = vec!["dog"; n_easy];
        words.extend(std::iter::repeat_n("ocelot", n_hard));
        let base = format!("{}.", words.join(" "));
        let more = format!("{} ocelot.", words.join(" "));
        let d0 = dale_chall_detail(&base).unwrap();
        let d1 = dale_chall_detail(&more).unwrap();
        prop_assert_eq!(d1.difficult, d0.difficult + 1);
        // Both the difficult share and the sentence length grow.
        prop_assert!(d1.score > d0.score);
        prop_assert!(100.0 * d1.difficult as f64 / d1.words as f64 > 100.0 * d0.difficult as f64 / d0.words as f64);
    }

    #[test]
    fn normalization_ends_in_unit_interval(v in prop::collection::vec(-50.0f64..50.0, 1..20)) {
        let n = normalize(&v);
        prop_assert!(n.iter().all(|x| (0.0..=1.0).contains(x)));
    }
}

fn dyadic() -> impl Strategy<Value = f64> {
    (0i32..16).prop_map(|k| k as f64 / 16.0)
}

fn score_vector() -> impl Strategy<Value = ScoreVector> {
    (
        (
            dyadic(),
            dyadic(),
            -2i64..=0,
            dyadic(),
            (0i32..64).prop_map(|k| k as f64 / 4.0),
        ),
        (-1i64..=0, -1i64..=0, -1i64..=0, -1i64..=0),
    )
        .prop_map(
            |((bleu, meteor, has, grammar, readability), (fl, ac, co, re))| ScoreVector {
                bleu,
                meteor,
                has,
                grammar,
                readability,
                fluency: fl,
                accuracy: ac,
                coherence: co,
                relevance: re,
            },
        )
}

fn candidate_set() -> impl Strategy<Value = Vec<(CandidateSentence, ScoreVector)>> {
    prop::collection::vec(score_vector(), 1..8).prop_map(|scores| {
        scores
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                (
                    CandidateSentence::new("t1", format!("g{i}"), &format!("sentence {i}"))
                        .unwrap(),
                    s,
                )
            })
            .collect()
    })
}

fn order(ranked: &[relgen_core::ranking::RankedCandidate]) -> Vec<String> {
    ranked
        .iter()
        .map(|r| r.candidate.generator_id.clone())
        .collect()
}

fn scale(s: &ScoreVector, m: Metric, a: f64, b: f64) -> ScoreVector {
    let mut out = *s;
    match m {
        Metric::Bleu => out.bleu = a * s.bleu + b,
        Metric::Meteor => out.meteor = a * s.meteor + b,
        Metric::Grammar => out.grammar = a * s.grammar + b,
        Metric::Readability => out.readability = a * s.readability + b,
        _ => {}
    }
    out
}

proptest! {
    #[test]
    fn ranking_ignores_positive_affine_rescaling(
        set in candidate_set(),
        m in prop::sample::select(vec![Metric::Bleu, Metric::Meteor, Metric::Grammar, Metric::Readability]),
        a in prop::sample::select(vec![0.5, 2.0, 4.0, 8.0]),
        b in (0i32..8).prop_map(|k| k as f64 / 2.0),
    ) {
        let w = WeightConfig::default();
        let p = Priority::default();
        let before = rank_all(&set, &w, &p);
        let moved: Vec<_> = set.iter().map(|(c, s)| (c.clone(), scale(s, m, a, b))).collect();
        let after = rank_all(&moved, &w, &p);
        prop_assert_eq!(order(&before), order(&after));
    }

    #[test]
    fn ranking_ignores_input_order(set in candidate_set(), seed in any::<u64>()) {
        let w = WeightConfig::default();
        let p = Priority(vec!["g3".into(), "g1".into()]);
        let mut shuffled = set.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize);
        }
        prop_assert_eq!(order(&rank_all(&set, &w, &p)), order(&rank_all(&shuffled, &w, &p)));
    }

    #[test]
    fn raising_one_metric_never_lowers_rank(set in candidate_set(), pick in any::<prop::sample::Index>()) {
        let w = WeightConfig::default();
        let p = Priority::default();
        let i = pick.index(set.len());
        let id = set[i].0.generator_id.clone();
        let rank_of = |s: &[(CandidateSentence, ScoreVector)]| {
            rank_all(s, &w, &p).iter().find(|r| r.candidate.generator_id == id).unwrap().rank
        };
        let before = rank_of(&set);
        let mut up = set.clone();
        up[i].1.bleu += 1.0;
        prop_assert!(rank_of(&up) <= before);
    }

    #[test]
    fn ranks_are_dense_and_sei_descending(set in candidate_set()) {
        let ranked = rank_all(&set, &WeightConfig::default(), &Priority::default());
        prop_assert_eq!(ranked.len(), set.len());
        for (i, r) in ranked.iter().enumerate() {
            prop_assert_eq!(r.rank, i + 1);
        }
        prop_assert!(ranked.windows(2).all(|w| w[0].sei >= w[1].sei));
    }
}

const NAMES: &[&str] = &["Anna", "Bob", "Paris", "Oslo", "Acme", "Rome", "Kim"];

fn tuples() -> impl Strategy<Value = Vec<RelationTuple>> {
    prop::collection::vec((0..NAMES.len(), 0..NAMES.len()), 1..5).prop_map(|pairs| {
        pairs
            .into_iter()
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, (a, b))| {
                RelationTuple::new(
                    format!("t{i}"),
                    NAMES[a],
                    EntityType::Person,
                    "knows",
                    NAMES[b],
                    EntityType::Person,
                )
                .unwrap()
            })
            .collect()
    })
}

fn outputs() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::collection::vec(prop::sample::select(NAMES), 0..4).prop_map(|w| w.join(" met ")),
        0..6,
    )
}

proptest! {
    #[test]
    fn mapping_is_sound_and_accounts_for_everything(ts in tuples(), out in outputs()) {
        let m = map_batch_output(&out, &ts);
        for (t, s) in &m.pairs {
            prop_assert!(t.entities_in(s));
        }
        let mut ids: Vec<_> = m.pairs.iter().map(|(t, _)| t.id.clone()).collect();
        ids.dedup();
        prop_assert_eq!(ids.len(), m.pairs.len());
        prop_assert_eq!(m.pairs.len() + m.report.unmatched_tuples, ts.len());
        prop_assert_eq!(m.pairs.len() + m.report.sentences_dropped(), out.len());
    }

    #[test]
    fn mapping_retained_pairs_is_a_fixpoint(ts in tuples(), out in outputs()) {
        let first = map_batch_output(&out, &ts);
        let (kept_t, kept_s): (Vec<_>, Vec<_>) = first.pairs.iter().cloned().unzip();
        let second = map_batch_output(&kept_s, &kept_t);
        prop_assert_eq!(&second.pairs, &first.pairs);
        prop_assert!(second.report.is_clean());
    }

    #[test]
    fn parse_label_never_panics(s in ".{0,200}") {
        let reg = Registry::from_keys([key("knows")]);
        let p = parse_label("x", &s, &reg);
        prop_assert_eq!(p.label.is_none(), p.unparseable.is_some());
    }

    #[test]
    fn parse_label_reads_embedded_json(prefix in "[a-z ]{0,30}", suffix in "[a-z }]{0,30}") {
        let reg = Registry::from_keys([key("knows")]);
        let body = r#"{"Entity_1_type": "Person", "Relation": "knows", "Entity_2_type": "Location"}"#;
        let p = parse_label("x", &format!("{prefix}{body}{suffix}"), &reg);
        prop_assert_eq!(p.label, Some(key("knows")));
    }
}

fn key(r: &str) -> BucketKey {
    BucketKey::new(EntityType::Person, r, EntityType::Location)
}

fn label_set() -> impl Strategy<Value = Vec<(String, Option<String>)>> {
    let rel = prop::sample::select(vec!["a", "b", "c"]);
    prop::collection::vec((rel.clone(), prop::option::weighted(0.8, rel)), 1..30).prop_map(|v| {
        v.into_iter()
            .map(|(g, p)| (g.to_string(), p.map(str::to_string)))
            .collect()
    })
}

fn build(v: &[(String, Option<String>)]) -> (Vec<(String, BucketKey)>, Vec<Prediction>) {
    v.iter()
        .enumerate()
        .map(|(i, (g, p))| {
            let id = format!("i{i}");
            (
                (id.clone(), key(g)),
                Prediction {
                    instance_id: id,
                    raw: String::new(),
                    label: p.as_deref().map(key),
                    unparseable: p
                        .is_none()
                        .then_some(relgen_core::rc_eval::UnparseableReason::NoLabel),
                },
            )
        })
        .unzip()
}

proptest! {
    #[test]
    fn rc_metrics_match_confusion_and_ignore_order(v in label_set()) {
        let (golds, preds) = build(&v);
        let r = compute_metrics(&golds, &preds).unwrap();
        let c = brute_confusion(&golds, &preds);
        prop_assert_eq!(r.correct, c.correct);
        prop_assert!((r.precision - c.precision).abs() < 1e-12);
        prop_assert!((r.f1 - c.f1).abs() < 1e-12);
        prop_assert_eq!(r.recall, r.accuracy);
        let mut rev = preds.clone();
        rev.reverse();
        prop_assert_eq!(compute_metrics(&golds, &rev).unwrap(), r);
    }

    #[test]
    fn precision_equals_recall_without_abstentions(v in label_set()) {
        let filled: Vec<_> = v
            .into_iter()
            .map(|(g, p)| (g.clone(), Some(p.unwrap_or(g))))
            .collect();
        let (golds, preds) = build(&filled);
        let r = compute_metrics(&golds, &preds).unwrap();
        prop_assert!((r.precision - r.recall).abs() < 1e-12);
        prop_assert!((r.accuracy - r.f1).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn judge_flags_are_stable_and_in_range(text in sentence(), pick in 0..NAMES.len()) {
        let t = RelationTuple::new("t", NAMES[pick], EntityType::Person, "knows", "Paris", EntityType::Location).unwrap();
        let judge = relgen_core::backend::mock::MockJudge;
        let a = relgen_core::scoring::tiger_flags(&text, &t, &judge).unwrap();
        let b = relgen_core::scoring::tiger_flags(&text, &t, &judge).unwrap();
        prop_assert_eq!(a, b);
        for v in [a.fluency, a.accuracy, a.coherence, a.relevance] {
            prop_assert!(v == 0 || v == -1);
        }
    }
}
