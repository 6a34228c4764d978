//! Teacher forcing, self-conversation, discriminator training and the
//! adversarial loop that alternates them.

mod adversarial;
mod selfconv;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adversarial::{
    adversarial_training, import_parameters, AdversarialTrainer, ImportEvent, NoopObserver, Phase, PhaseRecord,
    RunOptions, TrainingObserver,
};
pub use selfconv::{self_conversation, MachinePair, MachineSet};

use crate::corpus::EncodedPair;
use crate::error::{Error, Result};
use crate::model::{Gca, GcaVars};
use crate::numerics::{Adam, Parameter, Parameterized, Tape, Var};

/// Hyperparameters of the training procedures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    /// Generator epochs per adversarial round (N_G).
    pub generator_epochs: usize,
    /// Discriminator epochs per adversarial round (N_D).
    pub discriminator_epochs: usize,
    /// Teacher-forcing epochs after each adversarial update (N_tf).
    pub teacher_forcing_epochs: usize,
    /// Teacher-forcing epochs before the first round.
    pub initial_teacher_forcing_epochs: usize,
    /// Machine pairs produced per round (N_m).
    pub machine_pairs: usize,
    pub adversarial_epochs: usize,
    /// Adversarial generator learning rate (α_g).
    pub generator_lr: f64,
    /// Discriminator learning rate (α_d).
    pub discriminator_lr: f64,
    pub teacher_forcing_lr: f64,
    pub batch_size: usize,
    pub self_conversation_turns: usize,
    /// Whether the shared embedding moves during the adversarial generator update.
    pub train_embedding_adversarially: bool,
    pub seed: u64,
}

impl TrainingConfig {
    pub fn full_scale() -> Self {
        Self {
            generator_epochs: 1,
            discriminator_epochs: 15,
            teacher_forcing_epochs: 1,
            initial_teacher_forcing_epochs: 20,
            machine_pairs: 7900,
            adversarial_epochs: 10,
            generator_lr: 5e-5,
            discriminator_lr: 1e-4,
            teacher_forcing_lr: 1e-3,
            batch_size: 32,
            self_conversation_turns: 2,
            train_embedding_adversarially: false,
            seed: 0,
        }
    }

    pub fn desk_scale() -> Self {
        Self {
            initial_teacher_forcing_epochs: 300,
            machine_pairs: 20,
            adversarial_epochs: 2,
            generator_lr: 1e-4,
            discriminator_lr: 5e-3,
            teacher_forcing_lr: 1e-2,
            batch_size: 4,
            ..Self::full_scale()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("generator_epochs", self.generator_epochs),
            ("discriminator_epochs", self.discriminator_epochs),
            ("teacher_forcing_epochs", self.teacher_forcing_epochs),
            ("machine_pairs", self.machine_pairs),
            ("adversarial_epochs", self.adversarial_epochs),
            ("batch_size", self.batch_size),
            ("self_conversation_turns", self.self_conversation_turns),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.self_conversation_turns < 2 {
            return Err(Error::Config("self_conversation_turns must be at least 2".into()));
        }
        for (name, lr) in [
            ("generator_lr", self.generator_lr),
            ("discriminator_lr", self.discriminator_lr),
            ("teacher_forcing_lr", self.teacher_forcing_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        Ok(())
    }
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self::desk_scale()
    }
}

/// Sequential mini-batch loop: per batch, accumulate each item's summed
/// loss, average the gradients over the batch's token count, take one Adam
/// step on `group`. Returns the mean per-token loss.
fn run_batches<T>(
    model: &mut Gca,
    items: &[T],
    batch_size: usize,
    adam: &mut Adam,
    lr: f64,
    group: fn(&mut Gca) -> Vec<&mut Parameter>,
    tokens: impl Fn(&T) -> usize,
    mut loss: impl for<'t> FnMut(&mut Tape<'t>, &GcaVars, &T) -> Result<Option<Var>>,
    mut after_step: impl FnMut(&Gca),
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for batch in items.chunks(batch_size.max(1)) {
        model.zero_grad();
        let mut batch_tokens = 0;
        for item in batch {
            total += model.accumulate_loss(|tape, vars| loss(tape, vars, item))?;
            batch_tokens += tokens(item);
        }
        if batch_tokens == 0 {
            continue;
        }
        count += batch_tokens;
        let scale = 1.0 / batch_tokens as f64;
        let mut params = group(model);
        for p in params.iter_mut() {
            for g in p.grad.data_mut() {
                *g *= scale;
            }
        }
        adam.step(&mut params, lr)?;
        after_step(model);
    }
    model.zero_grad();
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// One teacher-forcing epoch over `pairs` in order; returns the mean
/// per-token cross-entropy. Updates the embedding and the generator.
pub fn teacher_forcing_epoch(
    model: &mut Gca,
    pairs: &[EncodedPair],
    adam: &mut Adam,
    lr: f64,
    batch_size: usize,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Usage("teacher forcing needs at least one pair".into()));
    }
    with_trainable(model, true, true, false, |model| {
        run_batches(
            model,
            pairs,
            batch_size,
            adam,
            lr,
            Gca::generator_group_mut,
            |p| p.answer.effective_len(),
            |tape, vars, p| vars.teacher_forcing_loss(tape, p.context.tokens(), p.answer.tokens()),
            |_| {},
        )
    })
}

/// Mean per-token cross-entropy without updating anything.
pub fn teacher_forcing_loss(model: &Gca, pairs: &[EncodedPair]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for p in pairs {
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        if let Some(l) = vars.teacher_forcing_loss(&mut tape, p.context.tokens(), p.answer.tokens())? {
            total += tape.value(l).item();
            count += p.answer.effective_len();
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Fraction of pairs whose greedy decode equals the stored answer exactly.
pub fn reproduction_rate(model: &Gca, pairs: &[EncodedPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0;
    for p in pairs {
        if model.greedy_decode(&p.context)?.answer.tokens() == p.answer.tokens() {
            hits += 1;
        }
    }
    Ok(hits as f64 / pairs.len() as f64)
}

/// One token-level discriminator example group: a stored pair and its label.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledPair {
    pub pair: EncodedPair,
    /// 1 for human, 0 for machine.
    pub label: f64,
}

/// Human pairs labelled 1 followed by machine pairs labelled 0.
pub fn labelled_pairs(human: &[EncodedPair], machine: &MachineSet) -> Vec<LabelledPair> {
    human
        .iter()
        .map(|p| LabelledPair {
            pair: p.clone(),
            label: 1.0,
        })
        .chain(machine.pairs.iter().map(|m| LabelledPair {
            pair: m.to_pair(),
            label: 0.0,
        }))
        .collect()
}

/// Trains the discriminator for `epochs` on binary cross-entropy with the
/// embedding and generator frozen. Examples are reshuffled every epoch.
/// Returns the mean per-token loss of each epoch.
pub fn train_discriminator(
    model: &mut Gca,
    examples: &[LabelledPair],
    adam: &mut Adam,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    if !examples.iter().any(|e| e.label == 1.0) || !examples.iter().any(|e| e.label == 0.0) {
        return Err(Error::Usage("discriminator training needs human and machine examples".into()));
    }
    let mut order: Vec<&LabelledPair> = examples.iter().collect();
    with_trainable(model, false, false, true, |model| {
        let mut losses = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            order.shuffle(rng);
            losses.push(run_batches(
                model,
                &order,
                batch_size,
                adam,
                lr,
                |m| m.discriminator.parameters_mut(),
                |e| e.pair.answer.effective_len(),
                |tape, vars, e| {
                    vars.discriminator_loss(tape, e.pair.context.tokens(), e.pair.answer.tokens(), e.label)
                },
                |_| {},
            )?);
        }
        Ok(losses)
    })
}

/// Token-level accuracy: an output of at least 0.5 means human.
pub fn discriminator_accuracy(model: &Gca, examples: &[LabelledPair]) -> Result<f64> {
    let mut correct = 0;
    let mut total = 0;
    for e in examples {
        for l in model.token_scores(&e.pair.context, &e.pair.answer)? {
            let human = l >= 0.5;
            if human == (e.label == 1.0) {
                correct += 1;
            }
            total += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { correct as f64 / total as f64 })
}

/// Mean discriminator output over every machine token when the generator's
/// distribution fills the current-token slot.
pub fn mean_generator_fooling(model: &Gca, machine: &MachineSet) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for m in &machine.pairs {
        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let dists = vars.generator_distributions(&mut tape, m.context.tokens(), m.answer.tokens())?;
        let outputs = vars.discriminator_outputs(&mut tape, m.context.tokens(), m.answer.tokens(), &dists)?;
        for l in outputs {
            total += tape.value(l).item();
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

/// Updates the generator through the frozen discriminator for `epochs`,
/// pushing every token's output toward 1. Fails if any discriminator
/// parameter is trainable. Returns the mean per-token loss of each epoch.
pub fn adversarial_generator_update(
    model: &mut Gca,
    machine: &MachineSet,
    adam: &mut Adam,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    train_embedding: bool,
    mut after_step: impl FnMut(&Gca),
) -> Result<Vec<f64>> {
    if model.discriminator.parameters().iter().any(|p| p.trainable) {
        return Err(Error::Usage("discriminator must be frozen for the generator update".into()));
    }
    with_trainable(model, train_embedding, true, false, |model| {
        let mut losses = Vec::with_capacity(epochs);
        for _ in 0..epochs {
            losses.push(run_batches(
                model,
                &machine.pairs,
                batch_size,
                adam,
                lr,
                Gca::generator_group_mut,
                |m| m.answer.effective_len(),
                |tape, vars, m| vars.adversarial_loss(tape, m.context.tokens(), m.answer.tokens()),
                &mut after_step,
            )?);
        }
        Ok(losses)
    })
}

/// Runs `f` with the given trainable flags and restores the previous flags afterwards.
fn with_trainable<T>(
    model: &mut Gca,
    embedding: bool,
    generator: bool,
    discriminator: bool,
    f: impl FnOnce(&mut Gca) -> Result<T>,
) -> Result<T> {
    let saved: Vec<bool> = model.parameters().iter().map(|p| p.trainable).collect();
    model.embedding.trainable = embedding;
    model.generator.set_trainable(generator);
    model.discriminator.set_trainable(discriminator);
    let out = f(model);
    for (p, t) in model.parameters_mut().into_iter().zip(saved) {
        p.trainable = t;
    }
    out
}
