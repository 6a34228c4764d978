mod common;

use std::collections::HashSet;

use common::*;
use gca_core::corpus::{load_weights, EncodedPair, EncodedSequence, EOS};
use gca_core::model::Gca;
use gca_core::numerics::{checksum, Adam, Parameterized};
use gca_core::training::*;
use gca_core::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn quick_config() -> TrainingConfig {
    TrainingConfig {
        initial_teacher_forcing_epochs: 5,
        machine_pairs: 6,
        discriminator_epochs: 2,
        seed: 3,
        ..TrainingConfig::desk_scale()
    }
}

#[test]
fn config_validation() {
    assert!(TrainingConfig::desk_scale().validate().is_ok());
    let full = TrainingConfig::full_scale();
    assert_eq!((full.generator_epochs, full.discriminator_epochs, full.teacher_forcing_epochs), (1, 15, 1));
    assert_eq!(full.machine_pairs, 7900);
    assert_eq!((full.generator_lr, full.discriminator_lr), (5e-5, 1e-4));
    for broken in [
        TrainingConfig { batch_size: 0, ..quick_config() },
        TrainingConfig { discriminator_lr: 0.0, ..quick_config() },
        TrainingConfig { self_conversation_turns: 1, ..quick_config() },
    ] {
        assert!(matches!(broken.validate(), Err(Error::Config(_))));
    }
    let parsed: TrainingConfig = serde_json::from_str(r#"{"batch_size": 8}"#).unwrap();
    assert_eq!(parsed.batch_size, 8);
    assert!(serde_json::from_str::<TrainingConfig>(r#"{"batchsize": 8}"#).is_err());
}

#[test]
fn teacher_forcing_loss_is_finite_and_ignores_padding() {
    let toy = toy();
    let mut a = Gca::new(toy.config, 1).unwrap();
    let mut b = a.clone();
    let pairs = &toy.pairs[..4];
    let longer: Vec<EncodedPair> = pairs
        .iter()
        .map(|p| EncodedPair {
            context: p.context.clone(),
            answer: p.answer.repadded(toy.config.seq_len + 3),
        })
        .collect();
    let la = teacher_forcing_epoch(&mut a, pairs, &mut Adam::default(), 1e-2, 2).unwrap();
    let lb = teacher_forcing_epoch(&mut b, &longer, &mut Adam::default(), 1e-2, 2).unwrap();
    assert!(la.is_finite() && la >= 0.0);
    assert_eq!(la, lb);
    assert_eq!(a, b);
    assert!(a.discriminator == Gca::new(toy.config, 1).unwrap().discriminator);
    assert!(teacher_forcing_epoch(&mut a, &[], &mut Adam::default(), 1e-2, 2).is_err());
}

#[test]
fn self_conversation_pairs_replay() {
    let toy = toy();
    let model = Gca::new(toy.config, 2).unwrap();
    let m = self_conversation(&model, &toy.pairs, 45, 2, 9).unwrap();
    assert_eq!(m.len(), 45);
    assert_eq!(m, self_conversation(&model, &toy.pairs, 45, 2, 9).unwrap());
    let contexts: HashSet<&EncodedSequence> = toy.pairs.iter().map(|p| &p.context).collect();
    for p in &m.pairs {
        assert!(contexts.contains(&p.seed));
        let first = model.greedy_decode(&p.seed).unwrap().answer;
        assert_eq!(p.context.tokens(), first.without_eos());
        assert_eq!(p.answer, model.greedy_decode(&p.context).unwrap().answer);
    }
    // the first full cycle visits every seed once
    let first_cycle: HashSet<&EncodedSequence> = m.pairs[..toy.pairs.len()].iter().map(|p| &p.seed).collect();
    assert_eq!(first_cycle.len(), contexts.len());
}

#[test]
fn discriminator_examples_are_labelled_by_origin() {
    let toy = toy();
    let mut model = Gca::new(toy.config, 4).unwrap();
    let m = self_conversation(&model, &toy.pairs, 5, 2, 0).unwrap();
    let examples = labelled_pairs(&toy.pairs, &m);
    assert_eq!(examples.len(), toy.pairs.len() + 5);
    assert!(examples[..toy.pairs.len()].iter().all(|e| e.label == 1.0));
    assert!(examples[toy.pairs.len()..].iter().all(|e| e.label == 0.0));
    let tokens: usize = examples.iter().map(|e| e.pair.answer.effective_len()).sum();
    let expected: usize = toy.pairs.iter().map(|p| p.answer.effective_len()).sum::<usize>()
        + m.pairs.iter().map(|p| p.answer.effective_len()).sum::<usize>();
    assert_eq!(tokens, expected);

    let before_embedding = model.embedding.clone();
    let before_generator = model.generator.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let losses = train_discriminator(&mut model, &examples, &mut Adam::default(), 3, 5e-3, 4, &mut rng).unwrap();
    assert_eq!(losses.len(), 3);
    assert_eq!(model.embedding, before_embedding);
    assert_eq!(model.generator, before_generator);
    assert!(model.parameters().iter().all(|p| p.trainable));

    let only_human = labelled_pairs(&toy.pairs, &MachineSet::default());
    assert!(train_discriminator(&mut model, &only_human, &mut Adam::default(), 1, 5e-3, 4, &mut rng).is_err());
}

#[test]
fn generator_update_requires_frozen_discriminator() {
    let toy = toy();
    let mut model = Gca::new(toy.config, 5).unwrap();
    let m = self_conversation(&model, &toy.pairs, 4, 2, 0).unwrap();
    let err = adversarial_generator_update(&mut model, &m, &mut Adam::default(), 1, 1e-3, 4, false, |_| {});
    assert!(matches!(err, Err(Error::Usage(_))));

    model.discriminator.set_trainable(false);
    let d_before = model.discriminator.checksum();
    let e_before = model.embedding.clone();
    let g_before = model.generator.checksum();
    let mut steps = 0;
    let losses = adversarial_generator_update(&mut model, &m, &mut Adam::default(), 2, 1e-3, 4, false, |c| {
        assert_eq!(c.discriminator.checksum(), d_before);
        steps += 1;
    })
    .unwrap();
    assert_eq!(losses.len(), 2);
    assert_eq!(steps, 2);
    assert_eq!(model.discriminator.checksum(), d_before);
    assert_eq!(model.embedding, e_before);
    assert_ne!(model.generator.checksum(), g_before);

    adversarial_generator_update(&mut model, &m, &mut Adam::default(), 1, 1e-3, 4, true, |_| {}).unwrap();
    assert_ne!(model.embedding, e_before);
    let pad_column: Vec<f64> = (0..model.embedding.value.rows()).map(|r| model.embedding.value.at(r, 0)).collect();
    assert!(pad_column.iter().all(|&v| v == 0.0));
}

#[test]
fn import_is_exact_and_checked() {
    let toy = toy();
    let source = Gca::new(toy.config, 6).unwrap();
    let mut target = Gca::new(toy.config, 7).unwrap();
    let sum = import_parameters(target.discriminator.parameters_mut(), source.discriminator.parameters()).unwrap();
    assert_eq!(sum, source.discriminator.checksum());
    assert_eq!(target.discriminator, source.discriminator);
    assert!(import_parameters(target.generator_group_mut(), source.discriminator.parameters()).is_err());
}

#[derive(Default)]
struct Recorder {
    phases: Vec<(usize, Phase)>,
    machine_sets: Vec<MachineSet>,
    imports: Vec<ImportEvent>,
}

impl TrainingObserver for Recorder {
    fn on_phase(&mut self, record: &PhaseRecord) {
        self.phases.push((record.epoch, record.phase));
    }
    fn on_machine_set(&mut self, _epoch: usize, set: &MachineSet, _generator: &Gca) {
        self.machine_sets.push(set.clone());
    }
    fn on_import(&mut self, event: &ImportEvent) {
        self.imports.push(event.clone());
    }
}

#[test]
fn adversarial_run_follows_the_phase_order_and_writes_artifacts() {
    let toy = toy();
    let dir = tempfile::tempdir().unwrap();
    let options = RunOptions {
        checkpoint_dir: Some(dir.path().join("ckpt")),
        log_path: Some(dir.path().join("log.jsonl")),
    };
    let mut rec = Recorder::default();
    let (model, history) = adversarial_training(toy.config, &toy.pairs, &quick_config(), &options, &mut rec).unwrap();

    use Phase::*;
    let expected = vec![
        (0, InitialTeacherForcing),
        (1, SelfConversation),
        (1, DiscriminatorTraining),
        (1, GeneratorAdversarial),
        (1, TeacherForcing),
        (2, SelfConversation),
        (2, DiscriminatorTraining),
        (2, GeneratorAdversarial),
        (2, TeacherForcing),
    ];
    assert_eq!(rec.phases, expected);
    assert_eq!(history.len(), expected.len());
    assert_eq!(rec.machine_sets.len(), 2);
    assert_ne!(rec.machine_sets[0], rec.machine_sets[1]);
    assert_eq!(rec.imports.len(), 6);
    assert!(rec.imports.iter().all(|e| e.source_checksum == e.imported_checksum));

    let log = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    let lines: Vec<PhaseRecord> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), expected.len());
    assert_eq!(lines[3].phase, GeneratorAdversarial);
    assert!(lines[3].fooling_before.is_some() && lines[3].mean_loss.is_some());

    let (params, config) = load_weights(&dir.path().join("ckpt/epoch-2.gcaw")).unwrap();
    assert_eq!(config, toy.config);
    assert_eq!(checksum(&params), model.checksum());
    assert!(dir.path().join("ckpt/epoch-1.gcaw").exists());
}

#[test]
fn empty_human_set_is_rejected() {
    let toy = toy();
    let r = adversarial_training(toy.config, &[], &quick_config(), &RunOptions::default(), &mut NoopObserver);
    assert!(matches!(r, Err(Error::Usage(_))));
    let model = Gca::new(toy.config, 0).unwrap();
    assert!(self_conversation(&model, &[], 3, 2, 0).is_err());
}

#[test]
fn reproduction_rate_counts_exact_matches() {
    let toy = toy();
    let mut model = Gca::new(toy.config, 8).unwrap();
    model.generator.b2.value.data_mut()[EOS] = 100.0;
    let eos_only: Vec<EncodedPair> = toy.pairs[..3]
        .iter()
        .map(|p| EncodedPair {
            context: p.context.clone(),
            answer: EncodedSequence::from_ids(&[EOS], toy.config.seq_len).unwrap(),
        })
        .collect();
    assert_eq!(reproduction_rate(&model, &eos_only).unwrap(), 1.0);
    assert_eq!(reproduction_rate(&model, &toy.pairs[..3]).unwrap(), 0.0);
}
