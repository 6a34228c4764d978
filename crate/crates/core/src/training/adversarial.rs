use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    adversarial_generator_update, labelled_pairs, mean_generator_fooling, self_conversation, teacher_forcing_epoch,
    train_discriminator, MachineSet, TrainingConfig,
};
use crate::corpus::{save_weights, EncodedPair, ModelConfig};
use crate::error::{Error, Result};
use crate::model::Gca;
use crate::numerics::{checksum, Adam, Parameter, Parameterized};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    InitialTeacherForcing,
    SelfConversation,
    DiscriminatorTraining,
    GeneratorAdversarial,
    TeacherForcing,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    /// 0 for the initial teacher forcing, then 1-based adversarial rounds.
    pub epoch: usize,
    pub phase: Phase,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_loss: Option<f64>,
    pub wall_time_secs: f64,
    /// Mean discriminator output on generator tokens before and after the generator update.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fooling_before: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fooling_after: Option<f64>,
}

/// A weight copy between the standalone model and the combined model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImportEvent {
    pub epoch: usize,
    pub what: &'static str,
    pub source_checksum: String,
    pub imported_checksum: String,
}

/// Hooks called by [`AdversarialTrainer`]; every method defaults to a no-op.
pub trait TrainingObserver {
    fn on_phase(&mut self, _record: &PhaseRecord) {}
    /// `generator` is the model that produced the set.
    fn on_machine_set(&mut self, _epoch: usize, _set: &MachineSet, _generator: &Gca) {}
    fn on_import(&mut self, _event: &ImportEvent) {}
    /// After every optimizer step of the adversarial generator update, with the combined model.
    fn on_generator_step(&mut self, _combined: &Gca) {}
}

pub struct NoopObserver;

impl TrainingObserver for NoopObserver {}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Weights are written here as `epoch-N.gcaw` after each round.
    pub checkpoint_dir: Option<PathBuf>,
    /// JSON-lines phase log.
    pub log_path: Option<PathBuf>,
}

/// Copies `src` into `dst` by position and checks the result bit for bit.
/// Returns the checksum of the imported values.
pub fn import_parameters(dst: Vec<&mut Parameter>, src: Vec<&Parameter>) -> Result<String> {
    if dst.len() != src.len() {
        return Err(Error::Usage(format!(
            "importing {} parameters into {}",
            src.len(),
            dst.len()
        )));
    }
    let expected = checksum(src.iter().copied());
    let mut dst = dst;
    for (d, s) in dst.iter_mut().zip(&src) {
        if d.name != s.name || d.value.shape() != s.value.shape() {
            return Err(Error::Usage(format!("cannot import {} into {}", s.name, d.name)));
        }
        d.value = s.value.clone();
    }
    let got = checksum(dst.iter().map(|p| &**p));
    if got != expected {
        return Err(Error::Usage("imported weights differ from their source".into()));
    }
    Ok(got)
}

/// State of an adversarial run: the standalone model, the combined model the
/// generator is updated in, and one optimizer per phase.
pub struct AdversarialTrainer {
    pub model: Gca,
    pub combined: Gca,
    pub config: TrainingConfig,
    pub history: Vec<PhaseRecord>,
    teacher_adam: Adam,
    discriminator_adam: Adam,
    generator_adam: Adam,
    log: Option<BufWriter<File>>,
}

impl AdversarialTrainer {
    pub fn new(model: Gca, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let mut combined = model.clone();
        combined.discriminator.set_trainable(false);
        Ok(Self {
            combined,
            model,
            config,
            history: Vec::new(),
            teacher_adam: Adam::default(),
            discriminator_adam: Adam::default(),
            generator_adam: Adam::default(),
            log: None,
        })
    }

    fn record(&mut self, record: PhaseRecord, observer: &mut dyn TrainingObserver) -> Result<()> {
        if let Some(log) = &mut self.log {
            let line = serde_json::to_string(&record).expect("phase records serialize");
            writeln!(log, "{line}")
                .and_then(|()| log.flush())
                .map_err(|e| Error::io("training log", e))?;
        }
        observer.on_phase(&record);
        self.history.push(record);
        Ok(())
    }

    fn teacher_forcing(
        &mut self,
        human: &[EncodedPair],
        epochs: usize,
        epoch: usize,
        phase: Phase,
        observer: &mut dyn TrainingObserver,
    ) -> Result<()> {
        let start = Instant::now();
        let mut loss = None;
        for _ in 0..epochs {
            loss = Some(teacher_forcing_epoch(
                &mut self.model,
                human,
                &mut self.teacher_adam,
                self.config.teacher_forcing_lr,
                self.config.batch_size,
            )?);
        }
        self.record(
            PhaseRecord {
                epoch,
                phase,
                mean_loss: loss,
                wall_time_secs: start.elapsed().as_secs_f64(),
                fooling_before: None,
                fooling_after: None,
            },
            observer,
        )
    }

    /// Teacher forcing on the human set before the first round.
    pub fn initial_teacher_forcing(&mut self, human: &[EncodedPair], observer: &mut dyn TrainingObserver) -> Result<()> {
        let epochs = self.config.initial_teacher_forcing_epochs;
        self.teacher_forcing(human, epochs, 0, Phase::InitialTeacherForcing, observer)
    }

    /// One adversarial round: regenerate M, train D, update G through the
    /// frozen D inside the combined model, copy G back, teacher-force.
    pub fn round(&mut self, epoch: usize, human: &[EncodedPair], observer: &mut dyn TrainingObserver) -> Result<()> {
        let cfg = self.config.clone();
        let round_seed = cfg.seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);

        let start = Instant::now();
        let machine = self_conversation(&self.model, human, cfg.machine_pairs, cfg.self_conversation_turns, round_seed)?;
        observer.on_machine_set(epoch, &machine, &self.model);
        self.record(
            PhaseRecord {
                epoch,
                phase: Phase::SelfConversation,
                mean_loss: None,
                wall_time_secs: start.elapsed().as_secs_f64(),
                fooling_before: None,
                fooling_after: None,
            },
            observer,
        )?;

        let start = Instant::now();
        let examples = labelled_pairs(human, &machine);
        let mut rng = ChaCha8Rng::seed_from_u64(round_seed.wrapping_add(1));
        let losses = train_discriminator(
            &mut self.model,
            &examples,
            &mut self.discriminator_adam,
            cfg.discriminator_epochs,
            cfg.discriminator_lr,
            cfg.batch_size,
            &mut rng,
        )?;
        self.record(
            PhaseRecord {
                epoch,
                phase: Phase::DiscriminatorTraining,
                mean_loss: losses.last().copied(),
                wall_time_secs: start.elapsed().as_secs_f64(),
                fooling_before: None,
                fooling_after: None,
            },
            observer,
        )?;

        let start = Instant::now();
        let d_sum = import_parameters(self.combined.discriminator.parameters_mut(), self.model.discriminator.parameters())?;
        observer.on_import(&ImportEvent {
            epoch,
            what: "discriminator into combined",
            source_checksum: self.model.discriminator.checksum(),
            imported_checksum: d_sum,
        });
        self.combined.discriminator.set_trainable(false);
        let g_sum = import_parameters(self.combined.generator_group_mut(), self.model.generator_group())?;
        observer.on_import(&ImportEvent {
            epoch,
            what: "generator into combined",
            source_checksum: checksum(self.model.generator_group()),
            imported_checksum: g_sum,
        });
        let before = mean_generator_fooling(&self.combined, &machine)?;
        let losses = adversarial_generator_update(
            &mut self.combined,
            &machine,
            &mut self.generator_adam,
            cfg.generator_epochs,
            cfg.generator_lr,
            cfg.batch_size,
            cfg.train_embedding_adversarially,
            |m| observer.on_generator_step(m),
        )?;
        let after = mean_generator_fooling(&self.combined, &machine)?;
        let back = import_parameters(self.model.generator_group_mut(), self.combined.generator_group())?;
        observer.on_import(&ImportEvent {
            epoch,
            what: "generator from combined",
            source_checksum: checksum(self.combined.generator_group()),
            imported_checksum: back,
        });
        self.record(
            PhaseRecord {
                epoch,
                phase: Phase::GeneratorAdversarial,
                mean_loss: losses.last().copied(),
                wall_time_secs: start.elapsed().as_secs_f64(),
                fooling_before: Some(before),
                fooling_after: Some(after),
            },
            observer,
        )?;

        self.teacher_forcing(human, cfg.teacher_forcing_epochs, epoch, Phase::TeacherForcing, observer)
    }

    /// The whole procedure: initial teacher forcing, then the configured
    /// number of rounds with a checkpoint after each.
    pub fn run(
        mut self,
        human: &[EncodedPair],
        options: &RunOptions,
        observer: &mut dyn TrainingObserver,
    ) -> Result<(Gca, Vec<PhaseRecord>)> {
        if human.is_empty() {
            return Err(Error::Usage("adversarial training needs at least one human pair".into()));
        }
        if let Some(path) = &options.log_path {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            self.log = Some(BufWriter::new(file));
        }
        if let Some(dir) = &options.checkpoint_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        self.initial_teacher_forcing(human, observer)?;
        for epoch in 1..=self.config.adversarial_epochs {
            self.round(epoch, human, observer)?;
            if let Some(dir) = &options.checkpoint_dir {
                save_weights(
                    self.model.parameters(),
                    &self.model.config,
                    &dir.join(format!("epoch-{epoch}.gcaw")),
                )?;
            }
        }
        Ok((self.model, self.history))
    }
}

/// Fresh model from `config.seed`, then [`AdversarialTrainer::run`].
pub fn adversarial_training(
    model_config: ModelConfig,
    human: &[EncodedPair],
    config: &TrainingConfig,
    options: &RunOptions,
    observer: &mut dyn TrainingObserver,
) -> Result<(Gca, Vec<PhaseRecord>)> {
    let model = Gca::new(model_config, config.seed)?;
    AdversarialTrainer::new(model, config.clone())?.run(human, options, observer)
}
