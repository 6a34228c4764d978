mod common;

use std::collections::BTreeSet;

use common::*;
use gca_core::corpus::{EncodedSequence, EOS};
use gca_core::evaluation::*;
use gca_core::model::Gca;
use proptest::prelude::*;

fn cand(model: String, score: f64) -> Candidate {
    Candidate {
        model,
        answer: EncodedSequence::from_ids(&[4, EOS], 4).unwrap(),
        score,
        probability: score * score,
    }
}

fn brute_force_jaccard(a: &[u8], b: &[u8]) -> f64 {
    let mut inter = 0;
    let mut union = Vec::new();
    for x in a.iter().chain(b) {
        if !union.contains(x) {
            union.push(*x);
        }
    }
    for x in &union {
        if a.contains(x) && b.contains(x) {
            inter += 1;
        }
    }
    if union.is_empty() {
        1.0
    } else {
        inter as f64 / union.len() as f64
    }
}

#[test]
fn ranked_candidates_carry_consistent_scores() {
    let toy = toy();
    let judge = Gca::new(toy.config, 3).unwrap();
    let ctx = &toy.pairs[0].context;
    let answers = vec![
        ("long".to_string(), toy.pairs[2].answer.clone()),
        ("short".to_string(), EncodedSequence::from_ids(&[EOS], toy.config.seq_len).unwrap()),
    ];
    let r = rank_answers(&judge, ctx, &answers, Criterion::GeometricMean).unwrap();
    for c in &r.candidates {
        let n = c.answer.effective_len() as f64;
        assert!((c.score - c.probability.powf(1.0 / n)).abs() < 1e-12);
        assert!(c.score > 0.0 && c.score < 1.0 && c.probability > 0.0 && c.probability <= 1.0);
        assert!(c.score >= c.probability);
    }
    assert!(r.candidates[0].score >= r.candidates[1].score);
    let by_p = rank_answers(&judge, ctx, &answers, Criterion::Probability).unwrap();
    assert!(by_p.candidates[0].probability >= by_p.candidates[1].probability);
    assert!(rank_answers(&judge, ctx, &[], Criterion::GeometricMean).is_err());
}

#[test]
fn identical_generators_tie_everywhere() {
    let toy = toy();
    let g = Gca::new(toy.config, 11).unwrap();
    let judge = Gca::new(toy.config, 12).unwrap();
    let contexts: Vec<_> = toy.pairs.iter().map(|p| p.context.clone()).collect();
    let lines = ab_session(&contexts, ("a", &g), ("b", &g), &judge, Criterion::GeometricMean).unwrap();
    assert_eq!(lines.len(), contexts.len());
    assert!(lines.iter().all(|l| l.ranking.tie && l.vote.winner == Winner::Tie));
    assert!(lines.iter().all(|l| l.vote.source == Source::Adversarial));
    assert!(ab_session(&contexts, ("a", &g), ("a", &g), &judge, Criterion::GeometricMean).is_err());
}

#[test]
fn agreement_pipeline() {
    let toy = toy();
    let a = Gca::new(toy.config, 21).unwrap();
    let b = Gca::new(toy.config, 22).unwrap();
    let judge = Gca::new(toy.config, 23).unwrap();
    let contexts: Vec<_> = toy.pairs.iter().map(|p| p.context.clone()).collect();
    let lines = ab_session(&contexts, ("a", &a), ("b", &b), &judge, Criterion::GeometricMean).unwrap();
    let mut votes: Vec<VoteRecord> = lines.iter().map(|l| l.vote.clone()).collect();
    // a human who always agrees with the discriminator
    votes.extend(lines.iter().map(|l| VoteRecord {
        source: Source::Human,
        ..l.vote.clone()
    }));
    let h = winner_set(&votes, Source::Human);
    let adv = winner_set(&votes, Source::Adversarial);
    assert_eq!(jaccard_index(&h, &adv), 1.0);
    let human_votes: Vec<_> = votes.iter().filter(|v| v.source == Source::Human).collect();
    let summary = tally_for(human_votes, ["a", "b"]);
    assert_eq!(summary.contested + summary.ties, contexts.len());
}

#[test]
fn two_model_percentages() {
    let votes = |a: usize, b: usize| -> Vec<VoteRecord> {
        (0..a)
            .map(|i| ("seq2seq", i))
            .chain((0..b).map(|i| ("gca", i + a)))
            .map(|(m, i)| VoteRecord {
                line_id: i.to_string(),
                winner: Winner::Model(m.into()),
                source: Source::Human,
            })
            .collect()
    };
    let s = tally(&votes(252, 570));
    let p = s.percentages.unwrap();
    assert_eq!((p["seq2seq"], p["gca"]), (30.66, 69.34));
    let s = tally(&votes(26, 61));
    let p = s.percentages.unwrap();
    assert_eq!(p["gca"], 70.11);
    assert!((p["seq2seq"] - 29.88).abs() <= 0.01 + 1e-9);
}

proptest! {
    #[test]
    fn ranking_ignores_input_order(scores in proptest::collection::vec(0.01f64..1.0, 1..8), rotate in 0usize..8) {
        let cands: Vec<Candidate> = scores.iter().enumerate().map(|(i, &s)| cand(format!("m{i}"), s)).collect();
        let mut shuffled = cands.clone();
        shuffled.rotate_left(rotate % cands.len());
        shuffled.reverse();
        let a = rank_candidates(cands, Criterion::GeometricMean).unwrap();
        let b = rank_candidates(shuffled, Criterion::GeometricMean).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn tie_flag_follows_the_threshold(s1 in 0.01f64..1.0, s2 in 0.01f64..1.0) {
        let r = rank_candidates(vec![cand("x".into(), s1), cand("y".into(), s2)], Criterion::GeometricMean).unwrap();
        prop_assert_eq!(r.tie, (s1 - s2).abs() < 0.05 * s1.min(s2));
    }

    #[test]
    fn jaccard_matches_brute_force(a in proptest::collection::vec(0u8..15, 0..=10), b in proptest::collection::vec(0u8..15, 0..=10)) {
        let sa: BTreeSet<u8> = a.iter().copied().collect();
        let sb: BTreeSet<u8> = b.iter().copied().collect();
        let j = jaccard_index(&sa, &sb);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(j, jaccard_index(&sb, &sa));
        prop_assert!((j - brute_force_jaccard(&a, &b)).abs() < 1e-15);
    }

    #[test]
    fn percentages_sum_to_one_hundred(counts in proptest::collection::vec(0usize..300, 2), ties in 0usize..5) {
        let mut votes = Vec::new();
        for (m, &c) in counts.iter().enumerate() {
            for i in 0..c {
                votes.push(VoteRecord { line_id: format!("{m}-{i}"), winner: Winner::Model(format!("m{m}")), source: Source::Human });
            }
        }
        for i in 0..ties {
            votes.push(VoteRecord { line_id: format!("t{i}"), winner: Winner::Tie, source: Source::Human });
        }
        let s = tally(&votes);
        prop_assert_eq!(s.ties, ties);
        prop_assert_eq!(s.contested, counts.iter().sum::<usize>());
        if let Some(p) = s.percentages {
            let total: f64 = p.values().sum();
            prop_assert!((total - 100.0).abs() <= 0.01 + 1e-9);
        } else {
            prop_assert_eq!(s.contested, 0);
        }
    }
}
