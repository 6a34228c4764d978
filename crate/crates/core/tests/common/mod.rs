//! Straight-line reference implementation of the forward passes, written
//! with explicit loops and no tape, plus helpers shared by the test targets.
#![allow(dead_code)]

use gca_core::corpus::{EncodedSequence, ModelConfig, BOS, EOS};
use gca_core::model::{Gca, LstmParams};
use gca_core::numerics::Parameter;
use rand::Rng;

pub fn tiny_config() -> ModelConfig {
    ModelConfig {
        seq_len: 5,
        vocab_size: 8,
        embedding_dim: 3,
        sentence_dim: 4,
        disc_sentence_dim: 4,
        context_utterances: 2,
        hidden_dim: 4,
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn row_dot(w: &Parameter, row: usize, x: &[f64]) -> f64 {
    let cols = w.value.cols();
    let data = w.value.data();
    let mut s = 0.0;
    for j in 0..cols {
        s += data[row * cols + j] * x[j];
    }
    s
}

fn embed_column(model: &Gca, token: usize) -> Vec<f64> {
    let w = &model.embedding.value;
    (0..w.rows()).map(|r| w.at(r, token)).collect()
}

pub fn reference_lstm(p: &LstmParams, inputs: &[Vec<f64>]) -> Vec<f64> {
    let n = p.hidden_dim();
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    for x in inputs {
        let mut z = x.clone();
        z.extend_from_slice(&h);
        let mut next = vec![0.0; n];
        for k in 0..n {
            let i = sigmoid(row_dot(&p.input_w, k, &z) + p.input_b.value.data()[k]);
            let f = sigmoid(row_dot(&p.forget_w, k, &z) + p.forget_b.value.data()[k]);
            let o = sigmoid(row_dot(&p.output_w, k, &z) + p.output_b.value.data()[k]);
            let g = (row_dot(&p.cell_w, k, &z) + p.cell_b.value.data()[k]).tanh();
            c[k] = f * c[k] + i * g;
            next[k] = o * c[k].tanh();
        }
        h = next;
    }
    h
}

fn encode(model: &Gca, p: &LstmParams, tokens: &[usize]) -> Vec<f64> {
    let inputs: Vec<Vec<f64>> = tokens.iter().map(|&t| embed_column(model, t)).collect();
    reference_lstm(p, &inputs)
}

pub fn reference_generator(model: &Gca, context: &[usize], partial: &[usize]) -> Vec<f64> {
    let g = &model.generator;
    let mut e = encode(model, &g.context, context);
    e.extend(encode(model, &g.answer, partial));
    let hidden: Vec<f64> = (0..g.w1.value.rows())
        .map(|k| (row_dot(&g.w1, k, &e) + g.b1.value.data()[k]).max(0.0))
        .collect();
    let logits: Vec<f64> = (0..g.w2.value.rows())
        .map(|k| row_dot(&g.w2, k, &hidden) + g.b2.value.data()[k])
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|v| v / total).collect()
}

/// Recomputes every prefix from scratch at each step.
pub fn reference_greedy(model: &Gca, context: &[usize]) -> (Vec<usize>, f64, Vec<f64>) {
    let mut partial = vec![BOS];
    let mut answer = Vec::new();
    let mut steps = Vec::new();
    let mut probability = 1.0;
    while answer.len() < model.config.seq_len - 1 {
        let p = reference_generator(model, context, &partial);
        let mut best = EOS;
        for k in EOS + 1..p.len() {
            if p[k] > p[best] {
                best = k;
            }
        }
        answer.push(best);
        partial.push(best);
        steps.push(p[best]);
        probability *= p[best];
        if best == EOS {
            break;
        }
    }
    (answer, probability, steps)
}

pub fn reference_discriminator(model: &Gca, context: &[usize], partial: &[usize], current: &[f64]) -> f64 {
    let d = &model.discriminator;
    let mut e = current.to_vec();
    e.extend(encode(model, &d.context, context));
    e.extend(encode(model, &d.answer, partial));
    sigmoid(row_dot(&d.wd, 0, &e) + d.bd.value.data()[0])
}

/// Between `min_len` and `max_len` non-special tokens.
pub fn random_tokens(rng: &mut impl Rng, vocab: usize, min_len: usize, max_len: usize) -> Vec<usize> {
    let len = rng.gen_range(min_len..=max_len);
    (0..len).map(|_| rng.gen_range(EOS + 2..vocab)).collect()
}

pub fn seq(tokens: &[usize], len: usize) -> EncodedSequence {
    EncodedSequence::from_ids(tokens, len).unwrap()
}

pub fn with_bos(tokens: &[usize]) -> Vec<usize> {
    let mut out = vec![BOS];
    out.extend_from_slice(tokens);
    out
}

pub struct Toy {
    pub vocab: gca_core::corpus::Vocabulary,
    pub config: ModelConfig,
    pub pairs: Vec<gca_core::corpus::EncodedPair>,
}

/// The bundled corpus at desk scale, with the vocabulary sized to fit.
pub fn toy() -> Toy {
    use gca_core::corpus::*;
    let base = ModelConfig::desk_scale();
    let dialogues = parse_corpus(TOY_CORPUS, base.seq_len - 2);
    let vocab = Vocabulary::build(&dialogues, base.vocab_size).unwrap();
    let config = ModelConfig {
        vocab_size: vocab.len(),
        ..base
    };
    let pairs = encode_pairs(&make_pairs(&dialogues, config.context_utterances), &vocab, &config);
    Toy { vocab, config, pairs }
}
