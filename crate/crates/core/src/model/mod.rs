//! The generator, the token-level discriminator and the answer scores.
//!
//! Both networks read the same word embedding. A [`Gca`] owns exactly one
//! embedding matrix plus the generator and discriminator weights; every
//! forward pass borrows them through a [`Tape`].

mod discriminator;
mod generator;
mod lstm;
pub mod scoring;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use discriminator::{DiscriminatorParams, DiscriminatorVars};
pub use generator::{GeneratorParams, GeneratorVars};
pub use lstm::{lstm_encode, LstmParams, LstmState, LstmVars};
pub use scoring::{chain_probability, geometric_mean_score};

pub use crate::corpus::ModelConfig;
use crate::corpus::{EncodedSequence, BOS, EOS, PAD};
use crate::error::{Error, Result};
use crate::numerics::{ops, Gradients, LossKind, Parameter, Parameterized, Tape, Tensor, Var};

/// Half-width of the uniform weight initialization.
pub const INIT_SCALE: f64 = 0.08;

/// Output of greedy decoding.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodeResult {
    /// Generated tokens (no BOS), padded to `seq_len`.
    pub answer: EncodedSequence,
    /// Product of the per-step probabilities.
    pub probability: f64,
    pub step_probabilities: Vec<f64>,
}

/// Generator and discriminator sharing one word embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct Gca {
    pub config: ModelConfig,
    /// `embedding_dim × vocab_size`; column PAD is pinned to zero.
    pub embedding: Parameter,
    pub generator: GeneratorParams,
    pub discriminator: DiscriminatorParams,
}

impl Gca {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::with_init_scale(config, seed, INIT_SCALE)
    }

    pub fn with_init_scale(config: ModelConfig, seed: u64, scale: f64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut embedding =
            Parameter::uniform("embedding", &[config.embedding_dim, config.vocab_size], scale, &mut rng);
        zero_pad_column(&mut embedding.value);
        let generator = GeneratorParams::new(&config, scale, &mut rng);
        let discriminator = DiscriminatorParams::new(&config, scale, &mut rng);
        Ok(Self {
            config,
            embedding,
            generator,
            discriminator,
        })
    }

    /// Rebuilds a model from named parameters (e.g. a weight file).
    pub fn from_parameters(config: ModelConfig, params: Vec<Parameter>) -> Result<Self> {
        let mut model = Self::new(config, 0)?;
        if params.len() != model.parameters().len() {
            return Err(Error::format(
                "weights",
                format!("expected {} parameters, found {}", model.parameters().len(), params.len()),
            ));
        }
        for (slot, loaded) in model.parameters_mut().into_iter().zip(params) {
            if slot.name != loaded.name || slot.value.shape() != loaded.value.shape() {
                return Err(Error::format(
                    format!("parameter {}", loaded.name),
                    format!(
                        "expected {} with shape {:?}, found {} with shape {:?}",
                        slot.name,
                        slot.value.shape(),
                        loaded.name,
                        loaded.value.shape()
                    ),
                ));
            }
            *slot = loaded;
        }
        Ok(model)
    }

    /// Replaces the embedding matrix, e.g. with pretrained vectors.
    pub fn set_embedding(&mut self, mut matrix: Tensor) -> Result<()> {
        if matrix.shape() != self.embedding.value.shape() {
            return Err(Error::Dimension {
                op: "set_embedding",
                left: self.embedding.value.shape().to_vec(),
                right: matrix.shape().to_vec(),
            });
        }
        zero_pad_column(&mut matrix);
        self.embedding.value = matrix;
        Ok(())
    }

    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> GcaVars {
        GcaVars {
            embedding: tape.param(&self.embedding),
            generator: self.generator.bind(tape),
            discriminator: self.discriminator.bind(tape),
            vocab_size: self.config.vocab_size,
        }
    }

    /// Adds the gradients of every trainable parameter; the PAD embedding column stays zero.
    pub fn accumulate(&mut self, grads: &Gradients, vars: &GcaVars) {
        for (v, p) in vars.all().into_iter().zip(self.parameters_mut()) {
            grads.accumulate(v, p);
        }
        let cols = self.embedding.grad.cols();
        let g = self.embedding.grad.data_mut();
        for row in 0..g.len() / cols {
            g[row * cols + PAD] = 0.0;
        }
    }

    /// Builds a loss on a fresh tape, backpropagates it and adds the gradients
    /// to the parameters. Returns the loss value, or 0 when `build` yields no loss.
    pub fn accumulate_loss(
        &mut self,
        build: impl for<'t> FnOnce(&mut Tape<'t>, &GcaVars) -> Result<Option<Var>>,
    ) -> Result<f64> {
        let (value, grads, vars) = {
            let mut tape = Tape::new();
            let vars = self.bind(&mut tape);
            let Some(loss) = build(&mut tape, &vars)? else {
                return Ok(0.0);
            };
            (tape.value(loss).item(), tape.backward(loss)?, vars)
        };
        self.accumulate(&grads, &vars);
        Ok(value)
    }

    /// Embedding plus generator weights, the set updated by teacher forcing.
    pub fn generator_group_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = vec![&mut self.embedding];
        out.extend(self.generator.parameters_mut());
        out
    }

    pub fn generator_group(&self) -> Vec<&Parameter> {
        let mut out = vec![&self.embedding];
        out.extend(self.generator.parameters());
        out
    }

    fn check_tokens(&self, seq: &EncodedSequence) -> Result<()> {
        match seq.tokens().iter().find(|&&t| t >= self.config.vocab_size) {
            Some(t) => Err(Error::Domain(format!(
                "token index {t} outside vocabulary of size {}",
                self.config.vocab_size
            ))),
            None => Ok(()),
        }
    }

    /// Next-token distribution given a context and an incomplete answer that starts with BOS.
    pub fn generator_forward(&self, context: &EncodedSequence, partial: &EncodedSequence) -> Result<Tensor> {
        if partial.tokens().first() != Some(&BOS) {
            return Err(Error::Usage("incomplete answer must start with BOS".into()));
        }
        self.check_tokens(context)?;
        self.check_tokens(partial)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let e_c = vars.encode(&mut tape, vars.generator.context, context.tokens())?;
        let e_a = vars.encode(&mut tape, vars.generator.answer, partial.tokens())?;
        let p = vars.generator.head(&mut tape, e_c, e_a)?;
        Ok(tape.value(p).clone())
    }

    /// Greedy decoding: feed back the most probable token until EOS or
    /// `seq_len - 1` tokens. PAD and BOS are never emitted; ties go to the
    /// lowest index.
    pub fn greedy_decode(&self, context: &EncodedSequence) -> Result<DecodeResult> {
        self.check_tokens(context)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let e_c = vars.encode(&mut tape, vars.generator.context, context.tokens())?;

        let max_tokens = self.config.seq_len - 1;
        let mut state = vars.generator.answer.zero_state(&mut tape);
        let mut token = BOS;
        let mut generated = Vec::with_capacity(max_tokens);
        let mut steps = Vec::with_capacity(max_tokens);
        let mut probability = 1.0;
        while generated.len() < max_tokens {
            let x = tape.column(vars.embedding, token)?;
            state = vars.generator.answer.step(&mut tape, x, state)?;
            let p = vars.generator.head(&mut tape, e_c, state.hidden)?;
            let dist = tape.value(p).data();
            let best = EOS + ops::argmax(&dist[EOS..]).expect("vocabulary has at least 5 entries");
            let best_p = dist[best];
            generated.push(best);
            steps.push(best_p);
            probability *= best_p;
            token = best;
            if best == EOS {
                break;
            }
        }
        Ok(DecodeResult {
            answer: EncodedSequence::from_ids(&generated, self.config.seq_len)?,
            probability,
            step_probabilities: steps,
        })
    }

    /// Discriminator output for one token. `current` is either a generator
    /// distribution or a one-hot vector of length `vocab_size`.
    pub fn discriminator_forward(
        &self,
        context: &EncodedSequence,
        partial: &EncodedSequence,
        current: &Tensor,
    ) -> Result<f64> {
        if !current.is_vector() || current.len() != self.config.vocab_size {
            return Err(Error::Dimension {
                op: "discriminator_forward",
                left: current.shape().to_vec(),
                right: vec![self.config.vocab_size],
            });
        }
        self.check_tokens(context)?;
        self.check_tokens(partial)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let e_cd = vars.encode(&mut tape, vars.discriminator.context, context.tokens())?;
        let e_ad = vars.encode(&mut tape, vars.discriminator.answer, partial.tokens())?;
        let cur = tape.constant(current.clone());
        let l = vars.discriminator.head(&mut tape, cur, e_cd, e_ad)?;
        Ok(tape.value(l).item())
    }

    /// Per-token discriminator outputs `l_i` for a stored answer, using one-hot
    /// current tokens. One entry per non-PAD token, EOS included.
    pub fn token_scores(&self, context: &EncodedSequence, answer: &EncodedSequence) -> Result<Vec<f64>> {
        self.check_tokens(context)?;
        self.check_tokens(answer)?;
        if answer.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let outputs = vars.discriminator_on_tokens(&mut tape, context.tokens(), answer.tokens())?;
        Ok(outputs.iter().map(|&l| tape.value(l).item()).collect())
    }

    /// Product of the per-token discriminator outputs.
    pub fn answer_probability(&self, context: &EncodedSequence, answer: &EncodedSequence) -> Result<f64> {
        Ok(chain_probability(&self.token_scores(context, answer)?))
    }

    /// Geometric mean of the per-token discriminator outputs.
    pub fn answer_score(&self, context: &EncodedSequence, answer: &EncodedSequence) -> Result<f64> {
        geometric_mean_score(&self.token_scores(context, answer)?)
    }
}

impl Parameterized for Gca {
    fn parameters(&self) -> Vec<&Parameter> {
        let mut out = vec![&self.embedding];
        out.extend(self.generator.parameters());
        out.extend(self.discriminator.parameters());
        out
    }

    fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = vec![&mut self.embedding];
        out.extend(self.generator.parameters_mut());
        out.extend(self.discriminator.parameters_mut());
        out
    }
}

fn zero_pad_column(m: &mut Tensor) {
    let cols = m.cols();
    let data = m.data_mut();
    for row in 0..data.len() / cols {
        data[row * cols + PAD] = 0.0;
    }
}

/// `W_e` columns for each index: the embedding of a sequence without
/// materializing one-hot vectors. Returns an `embedding_dim × len` matrix.
pub fn embed(seq: &EncodedSequence, embedding: &Tensor) -> Result<Tensor> {
    let rows = embedding.rows();
    let len = seq.padded_len();
    let mut out = Tensor::zeros(&[rows, len]);
    for (t, &id) in seq.ids().iter().enumerate() {
        let col = embedding.column(id).map_err(|_| {
            Error::Domain(format!(
                "token index {id} outside vocabulary of size {}",
                embedding.cols()
            ))
        })?;
        for (r, v) in col.data().iter().enumerate() {
            out.data_mut()[r * len + t] = *v;
        }
    }
    Ok(out)
}

/// Tape handles for a bound [`Gca`].
#[derive(Clone, Copy, Debug)]
pub struct GcaVars {
    pub embedding: Var,
    pub generator: GeneratorVars,
    pub discriminator: DiscriminatorVars,
    vocab_size: usize,
}

impl GcaVars {
    /// In the same order as [`Gca::parameters`].
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        out.extend(self.generator.all());
        out.extend(self.discriminator.all());
        out
    }

    pub fn embed(&self, tape: &mut Tape<'_>, tokens: &[usize]) -> Result<Vec<Var>> {
        tokens.iter().map(|&t| tape.column(self.embedding, t)).collect()
    }

    /// Final hidden state of `lstm` over the embedded tokens.
    pub fn encode(&self, tape: &mut Tape<'_>, lstm: LstmVars, tokens: &[usize]) -> Result<Var> {
        let inputs = self.embed(tape, tokens)?;
        lstm.encode(tape, &inputs)
    }

    /// Encodings of every answer prefix `[BOS, a_0 … a_{i-1}]`, one per answer token.
    pub fn prefix_encodings(&self, tape: &mut Tape<'_>, lstm: LstmVars, answer: &[usize]) -> Result<Vec<Var>> {
        if answer.is_empty() {
            return Ok(Vec::new());
        }
        let mut inputs = Vec::with_capacity(answer.len());
        inputs.push(BOS);
        inputs.extend_from_slice(&answer[..answer.len() - 1]);
        let embedded = self.embed(tape, &inputs)?;
        lstm.run(tape, &embedded)
    }

    /// Teacher-forced next-token distributions, one per answer token.
    pub fn generator_distributions(&self, tape: &mut Tape<'_>, context: &[usize], answer: &[usize]) -> Result<Vec<Var>> {
        let e_c = self.encode(tape, self.generator.context, context)?;
        let prefixes = self.prefix_encodings(tape, self.generator.answer, answer)?;
        prefixes
            .into_iter()
            .map(|e_a| self.generator.head(tape, e_c, e_a))
            .collect()
    }

    /// Discriminator outputs with the given current-token vectors, one per answer position.
    pub fn discriminator_outputs(
        &self,
        tape: &mut Tape<'_>,
        context: &[usize],
        answer: &[usize],
        currents: &[Var],
    ) -> Result<Vec<Var>> {
        debug_assert_eq!(answer.len(), currents.len());
        let e_cd = self.encode(tape, self.discriminator.context, context)?;
        let prefixes = self.prefix_encodings(tape, self.discriminator.answer, answer)?;
        prefixes
            .into_iter()
            .zip(currents)
            .map(|(e_ad, &cur)| self.discriminator.head(tape, cur, e_cd, e_ad))
            .collect()
    }

    /// Discriminator outputs with one-hot current tokens.
    pub fn discriminator_on_tokens(&self, tape: &mut Tape<'_>, context: &[usize], answer: &[usize]) -> Result<Vec<Var>> {
        let currents = answer
            .iter()
            .map(|&t| Ok(tape.constant(Tensor::one_hot(self.vocab_size, t)?)))
            .collect::<Result<Vec<_>>>()?;
        self.discriminator_outputs(tape, context, answer, &currents)
    }

    /// Summed categorical cross-entropy of the teacher-forced distributions
    /// against each gold answer token. `None` for an empty answer.
    pub fn teacher_forcing_loss(&self, tape: &mut Tape<'_>, context: &[usize], answer: &[usize]) -> Result<Option<Var>> {
        let dists = self.generator_distributions(tape, context, answer)?;
        let losses = dists
            .into_iter()
            .zip(answer)
            .map(|(p, &t)| tape.loss(LossKind::CategoricalCrossEntropy, p, Tensor::one_hot(self.vocab_size, t)?))
            .collect::<Result<Vec<_>>>()?;
        sum_losses(tape, &losses)
    }

    /// Summed binary cross-entropy of the discriminator on stored tokens, all
    /// labelled `label` (1 human, 0 machine).
    pub fn discriminator_loss(
        &self,
        tape: &mut Tape<'_>,
        context: &[usize],
        answer: &[usize],
        label: f64,
    ) -> Result<Option<Var>> {
        let outputs = self.discriminator_on_tokens(tape, context, answer)?;
        let losses = outputs
            .into_iter()
            .map(|l| tape.loss(LossKind::BinaryCrossEntropy, l, Tensor::vector(vec![label])))
            .collect::<Result<Vec<_>>>()?;
        sum_losses(tape, &losses)
    }

    /// The combined model: generator distributions fill the discriminator's
    /// current-token slot, and each output is pushed toward 1 with squared error.
    pub fn adversarial_loss(&self, tape: &mut Tape<'_>, context: &[usize], answer: &[usize]) -> Result<Option<Var>> {
        let dists = self.generator_distributions(tape, context, answer)?;
        let outputs = self.discriminator_outputs(tape, context, answer, &dists)?;
        let losses = outputs
            .into_iter()
            .map(|l| tape.loss(LossKind::MeanSquaredError, l, Tensor::vector(vec![1.0])))
            .collect::<Result<Vec<_>>>()?;
        sum_losses(tape, &losses)
    }
}

fn sum_losses(tape: &mut Tape<'_>, losses: &[Var]) -> Result<Option<Var>> {
    match losses {
        [] => Ok(None),
        [one] => Ok(Some(*one)),
        many => tape.add_n(many).map(Some),
    }
}
