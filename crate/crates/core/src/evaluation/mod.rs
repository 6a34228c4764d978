//! Ranking answers with the discriminator, vote bookkeeping and agreement.

mod votes;

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use votes::{tally, tally_for, Source, TallySummary, VoteRecord, VoteStore, Winner, TIE};

use crate::corpus::EncodedSequence;
use crate::error::{Error, Result};
use crate::model::{chain_probability, geometric_mean_score, Gca};

/// Relative score gap below which the top two answers tie.
pub const TIE_THRESHOLD: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub model: String,
    pub answer: EncodedSequence,
    /// Geometric mean of the token outputs.
    pub score: f64,
    /// Product of the token outputs.
    pub probability: f64,
}

impl Candidate {
    /// Scores `answer` with the discriminator of `judge`.
    pub fn scored(judge: &Gca, model: impl Into<String>, context: &EncodedSequence, answer: EncodedSequence) -> Result<Self> {
        let ls = judge.token_scores(context, &answer)?;
        Ok(Self {
            model: model.into(),
            score: geometric_mean_score(&ls)?,
            probability: chain_probability(&ls),
            answer,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Length-normalized score.
    #[default]
    GeometricMean,
    /// Raw product of token outputs.
    Probability,
}

impl Criterion {
    pub fn value(self, c: &Candidate) -> f64 {
        match self {
            Criterion::GeometricMean => c.score,
            Criterion::Probability => c.probability,
        }
    }
}

/// Candidates best first, plus whether the top two tie.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub candidates: Vec<Candidate>,
    pub tie: bool,
}

impl Ranking {
    pub fn winner(&self) -> Winner {
        match (self.tie, self.candidates.first()) {
            (false, Some(c)) => Winner::Model(c.model.clone()),
            _ => Winner::Tie,
        }
    }
}

/// `|a − b| < 0.05 · min(a, b)`.
pub fn is_tie(a: f64, b: f64) -> bool {
    (a - b).abs() < TIE_THRESHOLD * a.min(b)
}

/// Sorts already-scored candidates, best first; equal values fall back to
/// the model id so the result does not depend on input order.
pub fn rank_candidates(mut candidates: Vec<Candidate>, criterion: Criterion) -> Result<Ranking> {
    if candidates.is_empty() {
        return Err(Error::Usage("ranking needs at least one candidate".into()));
    }
    candidates.sort_by(|a, b| {
        criterion
            .value(b)
            .partial_cmp(&criterion.value(a))
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.model.cmp(&b.model))
    });
    let tie = match &candidates[..] {
        [a, b, ..] => is_tie(criterion.value(a), criterion.value(b)),
        _ => false,
    };
    Ok(Ranking { candidates, tie })
}

/// Scores every `(model id, answer)` with `judge` and ranks them.
pub fn rank_answers(
    judge: &Gca,
    context: &EncodedSequence,
    answers: &[(String, EncodedSequence)],
    criterion: Criterion,
) -> Result<Ranking> {
    let candidates = answers
        .iter()
        .map(|(m, a)| Candidate::scored(judge, m.clone(), context, a.clone()))
        .collect::<Result<Vec<_>>>()?;
    rank_candidates(candidates, criterion)
}

/// `|A ∩ B| / |A ∪ B|`, with 1.0 for two empty sets.
pub fn jaccard_index<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Winner set of one vote source: `(line id, model id)` for every non-tie vote.
pub fn winner_set<'a>(votes: impl IntoIterator<Item = &'a VoteRecord>, source: Source) -> BTreeSet<(String, String)> {
    votes
        .into_iter()
        .filter(|v| v.source == source)
        .filter_map(|v| match &v.winner {
            Winner::Model(m) => Some((v.line_id.clone(), m.clone())),
            Winner::Tie => None,
        })
        .collect()
}

/// One line of an A/B session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbLine {
    pub line_id: String,
    pub context: EncodedSequence,
    pub ranking: Ranking,
    pub vote: VoteRecord,
}

/// Decodes every context with both generators, ranks the two answers with
/// the judge's discriminator and records the adversarial vote. Line ids are
/// the context indices.
pub fn ab_session(
    contexts: &[EncodedSequence],
    a: (&str, &Gca),
    b: (&str, &Gca),
    judge: &Gca,
    criterion: Criterion,
) -> Result<Vec<AbLine>> {
    if a.0 == b.0 {
        return Err(Error::Usage("the two models need distinct ids".into()));
    }
    contexts
        .iter()
        .enumerate()
        .map(|(i, ctx)| {
            let answers = [
                (a.0.to_owned(), a.1.greedy_decode(ctx)?.answer),
                (b.0.to_owned(), b.1.greedy_decode(ctx)?.answer),
            ];
            let ranking = rank_answers(judge, ctx, &answers, criterion)?;
            let line_id = i.to_string();
            Ok(AbLine {
                vote: VoteRecord {
                    line_id: line_id.clone(),
                    winner: ranking.winner(),
                    source: Source::Adversarial,
                },
                line_id,
                context: ctx.clone(),
                ranking,
            })
        })
        .collect()
}
