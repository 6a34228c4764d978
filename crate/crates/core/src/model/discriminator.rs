use rand::Rng;

use super::lstm::{LstmParams, LstmVars};
use crate::corpus::ModelConfig;
use crate::error::Result;
use crate::numerics::{Parameter, Parameterized, Tape, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorParams {
    pub context: LstmParams,
    pub answer: LstmParams,
    /// `1 × (s_v + 2·s_sed)`.
    pub wd: Parameter,
    pub bd: Parameter,
}

impl DiscriminatorParams {
    pub fn new(config: &ModelConfig, scale: f64, rng: &mut impl Rng) -> Self {
        let sed = config.disc_sentence_dim;
        Self {
            context: LstmParams::new("discriminator.context", config.embedding_dim, sed, scale, rng),
            answer: LstmParams::new("discriminator.answer", config.embedding_dim, sed, scale, rng),
            wd: Parameter::uniform(
                "discriminator.dense.weight",
                &[1, config.vocab_size + 2 * sed],
                scale,
                rng,
            ),
            bd: Parameter::constant("discriminator.dense.bias", &[1], 0.0),
        }
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> DiscriminatorVars {
        DiscriminatorVars {
            context: self.context.bind(tape),
            answer: self.answer.bind(tape),
            wd: tape.param(&self.wd),
            bd: tape.param(&self.bd),
        }
    }
}

impl Parameterized for DiscriminatorParams {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut out = self.context.parameters();
        out.extend(self.answer.parameters());
        out.extend([&self.wd, &self.bd]);
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.context.parameters_mut();
        out.extend(self.answer.parameters_mut());
        out.extend([&mut self.wd, &mut self.bd]);
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorVars {
    pub context: LstmVars,
    pub answer: LstmVars,
    pub wd: Var,
    pub bd: Var,
}

impl DiscriminatorVars {
    pub fn all(&self) -> Vec<Var> {
        let mut out = self.context.all();
        out.extend(self.answer.all());
        out.extend([self.wd, self.bd]);
        out
    }

    /// `sigmoid(W_d · [current e_cd e_ad] + b_d)`, a length-1 vector.
    pub fn head(&self, tape: &mut Tape<'_>, current: Var, context_embedding: Var, answer_embedding: Var) -> Result<Var> {
        let e = tape.concat(&[current, context_embedding, answer_embedding])?;
        let pre = tape.affine(self.wd, e, self.bd)?;
        tape.sigmoid(pre)
    }
}
