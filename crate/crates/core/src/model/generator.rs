use rand::Rng;

use super::lstm::{LstmParams, LstmVars};
use crate::corpus::ModelConfig;
use crate::error::Result;
use crate::numerics::{Parameter, Parameterized, Tape, Var};

/// Weights owned by the generator: both encoders and the two dense layers.
/// The word embedding lives next to it in [`super::Gca`].
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorParams {
    pub context: LstmParams,
    pub answer: LstmParams,
    pub w1: Parameter,
    pub b1: Parameter,
    pub w2: Parameter,
    pub b2: Parameter,
}

impl GeneratorParams {
    pub fn new(config: &ModelConfig, scale: f64, rng: &mut impl Rng) -> Self {
        let se = config.sentence_dim;
        let h = config.hidden_dim;
        Self {
            context: LstmParams::new("generator.context", config.embedding_dim, se, scale, rng),
            answer: LstmParams::new("generator.answer", config.embedding_dim, se, scale, rng),
            w1: Parameter::uniform("generator.dense1.weight", &[h, 2 * se], scale, rng),
            b1: Parameter::constant("generator.dense1.bias", &[h], 0.0),
            w2: Parameter::uniform("generator.dense2.weight", &[config.vocab_size, h], scale, rng),
            b2: Parameter::constant("generator.dense2.bias", &[config.vocab_size], 0.0),
        }
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> GeneratorVars {
        GeneratorVars {
            context: self.context.bind(tape),
            answer: self.answer.bind(tape),
            w1: tape.param(&self.w1),
            b1: tape.param(&self.b1),
            w2: tape.param(&self.w2),
            b2: tape.param(&self.b2),
        }
    }
}

impl Parameterized for GeneratorParams {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut out = self.context.parameters();
        out.extend(self.answer.parameters());
        out.extend([&self.w1, &self.b1, &self.w2, &self.b2]);
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.context.parameters_mut();
        out.extend(self.answer.parameters_mut());
        out.extend([&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]);
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GeneratorVars {
    pub context: LstmVars,
    pub answer: LstmVars,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl GeneratorVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = self.context.all();
        out.extend(self.answer.all());
        out.extend([self.w1, self.b1, self.w2, self.b2]);
        out
    }

    /// `softmax(W2 · relu(W1 · [e_c e_a] + b1) + b2)`.
    pub fn head(&self, tape: &mut Tape<'_>, context_embedding: Var, answer_embedding: Var) -> Result<Var> {
        let e = tape.concat(&[context_embedding, answer_embedding])?;
        let pre = tape.affine(self.w1, e, self.b1)?;
        let hidden = tape.relu(pre)?;
        let logits = tape.affine(self.w2, hidden, self.b2)?;
        tape.softmax(logits)
    }
}
