//! In-browser demo on the bundled toy corpus.
//!
//! Every method returns a JSON string so the page needs nothing beyond
//! `JSON.parse`. Errors come back as plain strings.

use gca_core::corpus::{
    detokenize, encode_context, encode_pairs, join_utterances, make_pairs, parse_corpus, tokenize, EncodedPair,
    EncodedSequence, ModelConfig, Vocabulary, EOS, EOS_TOKEN, TOY_CORPUS,
};
use gca_core::evaluation::{is_tie, rank_candidates, Candidate, Criterion};
use gca_core::model::{chain_probability, geometric_mean_score, Gca};
use gca_core::numerics::Adam;
use gca_core::training::{reproduction_rate, teacher_forcing_epoch};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const LEARNING_RATE: f64 = 1e-2;
const BATCH_SIZE: usize = 4;

#[derive(Serialize)]
pub struct TrainStatus {
    pub epochs: usize,
    pub loss: f64,
    pub reproduction_rate: f64,
}

#[derive(Serialize)]
pub struct Step {
    pub token: String,
    /// Generator probability of the emitted token.
    pub probability: f64,
    /// Discriminator output for the token.
    pub judge: f64,
}

#[derive(Serialize)]
pub struct Reply {
    pub answer: String,
    pub steps: Vec<Step>,
    /// Product of the step probabilities.
    pub probability: f64,
    pub score: f64,
    /// The utterances the model saw, oldest first.
    pub context: Vec<String>,
}

#[derive(Serialize)]
pub struct TokenScore {
    pub token: String,
    pub value: f64,
}

#[derive(Serialize)]
pub struct Ranked {
    pub label: String,
    pub text: String,
    pub score: f64,
    pub probability: f64,
    pub tokens: Vec<TokenScore>,
}

#[derive(Serialize)]
pub struct RankReply {
    /// Best first.
    pub candidates: Vec<Ranked>,
    pub tie: bool,
}

#[derive(Serialize)]
pub struct Summary {
    pub product: f64,
    pub geometric_mean: f64,
}

#[derive(Serialize)]
pub struct Comparison {
    pub a: Summary,
    pub b: Summary,
    /// "a", "b" or "tie" under the length-normalized score.
    pub by_score: &'static str,
    /// Same under the raw product.
    pub by_product: &'static str,
}

fn json(value: &impl Serialize) -> String {
    serde_json::to_string(value).expect("demo replies serialize")
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[wasm_bindgen]
pub struct Demo {
    model: Gca,
    vocab: Vocabulary,
    pairs: Vec<EncodedPair>,
    adam: Adam,
    epochs: usize,
    history: Vec<Vec<String>>,
}

#[wasm_bindgen]
impl Demo {
    /// Untrained model on the toy corpus.
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32) -> Result<Demo, String> {
        let base = ModelConfig::desk_scale();
        let dialogues = parse_corpus(TOY_CORPUS, base.seq_len - 2);
        let vocab = Vocabulary::build(&dialogues, base.vocab_size).map_err(err)?;
        let config = ModelConfig {
            vocab_size: vocab.len(),
            ..base
        };
        let pairs = encode_pairs(&make_pairs(&dialogues, config.context_utterances), &vocab, &config);
        Ok(Demo {
            model: Gca::new(config, seed.into()).map_err(err)?,
            vocab,
            pairs,
            adam: Adam::default(),
            epochs: 0,
            history: Vec::new(),
        })
    }

    /// Runs `epochs` teacher-forcing epochs and reports progress.
    pub fn train(&mut self, epochs: u32) -> Result<String, String> {
        let mut loss = f64::NAN;
        for _ in 0..epochs {
            loss = teacher_forcing_epoch(&mut self.model, &self.pairs, &mut self.adam, LEARNING_RATE, BATCH_SIZE)
                .map_err(err)?;
            self.epochs += 1;
        }
        Ok(json(&TrainStatus {
            epochs: self.epochs,
            loss,
            reproduction_rate: reproduction_rate(&self.model, &self.pairs).map_err(err)?,
        }))
    }

    /// The toy corpus utterances, one dialogue per array.
    pub fn corpus(&self) -> String {
        let dialogues = parse_corpus(TOY_CORPUS, self.model.config.seq_len - 2);
        let text: Vec<Vec<String>> = dialogues
            .iter()
            .map(|d| d.utterances.iter().map(|u| detokenize(u)).collect())
            .collect();
        json(&text)
    }

    /// Answers `utterance` given the running conversation and keeps the answer in it.
    pub fn chat(&mut self, utterance: &str) -> Result<String, String> {
        let tokens = tokenize(utterance);
        if tokens.is_empty() {
            return Err("say something first".into());
        }
        self.history.push(tokens);
        let start = self.history.len().saturating_sub(self.model.config.context_utterances);
        let window = &self.history[start..];
        let context = encode_context(&join_utterances(window), &self.vocab, self.model.config.seq_len);
        let decoded = self.model.greedy_decode(&context).map_err(err)?;
        let judged = self.model.token_scores(&context, &decoded.answer).map_err(err)?;
        let steps = decoded
            .answer
            .tokens()
            .iter()
            .zip(&decoded.step_probabilities)
            .zip(&judged)
            .map(|((&id, &p), &l)| Step {
                token: self.token(id),
                probability: p,
                judge: l,
            })
            .collect();
        let answer = self.vocab.decode(decoded.answer.tokens());
        let reply = Reply {
            answer: detokenize(&answer),
            steps,
            probability: decoded.probability,
            score: geometric_mean_score(&judged).map_err(err)?,
            context: window.iter().map(|u| detokenize(u)).collect(),
        };
        self.history.push(answer);
        Ok(json(&reply))
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }

    /// Scores two candidate answers to `context` with the discriminator.
    pub fn rank(&self, context: &str, answer_a: &str, answer_b: &str) -> Result<String, String> {
        let seq_len = self.model.config.seq_len;
        let ctx = encode_context(&tokenize(context), &self.vocab, seq_len);
        let mut candidates = Vec::new();
        for (label, text) in [("A", answer_a), ("B", answer_b)] {
            let mut ids: Vec<usize> = tokenize(text).iter().map(|t| self.vocab.id(t)).collect();
            ids.push(EOS);
            let answer = EncodedSequence::from_ids(&ids, seq_len).map_err(err)?;
            candidates.push(Candidate::scored(&self.model, label, &ctx, answer).map_err(err)?);
        }
        let ranking = rank_candidates(candidates, Criterion::GeometricMean).map_err(err)?;
        let mut out = Vec::new();
        for c in &ranking.candidates {
            let values = self.model.token_scores(&ctx, &c.answer).map_err(err)?;
            out.push(Ranked {
                label: c.model.clone(),
                text: detokenize(&self.vocab.decode(c.answer.tokens())),
                score: c.score,
                probability: c.probability,
                tokens: c
                    .answer
                    .tokens()
                    .iter()
                    .zip(values)
                    .map(|(&id, value)| TokenScore {
                        token: self.token(id),
                        value,
                    })
                    .collect(),
            });
        }
        Ok(json(&RankReply {
            candidates: out,
            tie: ranking.tie,
        }))
    }

    fn token(&self, id: usize) -> String {
        if id == EOS {
            EOS_TOKEN.to_owned()
        } else {
            self.vocab.token(id).unwrap_or("?").to_owned()
        }
    }
}

fn parse_outputs(text: &str) -> Result<Vec<f64>, String> {
    let values = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("{s:?} is not a number")))
        .collect::<Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("enter at least one value".into());
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
        return Err(format!("{v} is outside (0, 1]"));
    }
    Ok(values)
}

fn verdict(a: f64, b: f64) -> &'static str {
    if is_tie(a, b) {
        "tie"
    } else if a > b {
        "a"
    } else {
        "b"
    }
}

/// Compares two lists of per-token discriminator outputs by their product
/// and by their geometric mean.
#[wasm_bindgen]
pub fn compare_scores(a: &str, b: &str) -> Result<String, String> {
    let summary = |v: &[f64]| -> Result<Summary, String> {
        Ok(Summary {
            product: chain_probability(v),
            geometric_mean: geometric_mean_score(v).map_err(err)?,
        })
    };
    let a = summary(&parse_outputs(a)?)?;
    let b = summary(&parse_outputs(b)?)?;
    Ok(json(&Comparison {
        by_score: verdict(a.geometric_mean, b.geometric_mean),
        by_product: verdict(a.product, b.product),
        a,
        b,
    }))
}
