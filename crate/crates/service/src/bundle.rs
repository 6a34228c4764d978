//! Model directories: `weights.gcaw` plus `vocab.txt`.

use std::path::Path;

use gca_core::corpus::{
    detokenize, encode_context, encode_pairs, join_utterances, load_weights, make_pairs, parse_corpus, save_weights,
    EncodedPair, EncodedSequence, ModelConfig, Vocabulary,
};
use gca_core::model::Gca;
use gca_core::numerics::Parameterized;

use crate::error::{Result, ServiceError};

pub const WEIGHTS_FILE: &str = "weights.gcaw";
pub const VOCAB_FILE: &str = "vocab.txt";

/// A trained model together with the vocabulary it was trained on.
#[derive(Clone, Debug)]
pub struct ModelBundle {
    pub model: Gca,
    pub vocab: Vocabulary,
}

impl ModelBundle {
    pub fn new(model: Gca, vocab: Vocabulary) -> Result<Self> {
        if model.config.vocab_size != vocab.len() {
            return Err(ServiceError::Core(gca_core::Error::ConfigMismatch {
                found: format!("vocabulary of {} tokens", vocab.len()),
                expected: format!("vocab_size {}", model.config.vocab_size),
            }));
        }
        Ok(Self { model, vocab })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (params, config) = load_weights(&dir.join(WEIGHTS_FILE))?;
        let vocab = Vocabulary::load(&dir.join(VOCAB_FILE))?;
        Self::new(Gca::from_parameters(config, params)?, vocab)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| gca_core::Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        save_weights(self.model.parameters(), &self.model.config, &dir.join(WEIGHTS_FILE))?;
        self.vocab.save(&dir.join(VOCAB_FILE))?;
        Ok(())
    }

    /// Encodes the last `context_utterances` utterances of `history`.
    pub fn encode_history(&self, history: &[Vec<String>]) -> EncodedSequence {
        let start = history.len().saturating_sub(self.model.config.context_utterances);
        encode_context(&join_utterances(&history[start..]), &self.vocab, self.model.config.seq_len)
    }

    /// Answer tokens without the trailing EOS.
    pub fn answer_tokens(&self, answer: &EncodedSequence) -> Vec<String> {
        self.vocab.decode(answer.tokens())
    }

    pub fn answer_text(&self, answer: &EncodedSequence) -> String {
        detokenize(&self.answer_tokens(answer))
    }
}

/// Human pairs of a corpus text, encoded with a vocabulary built from it.
/// The returned config has `vocab_size` set to the vocabulary's actual size.
pub fn prepare_corpus(text: &str, config: ModelConfig) -> Result<(Vocabulary, ModelConfig, Vec<EncodedPair>)> {
    let dialogues = parse_corpus(text, config.seq_len.saturating_sub(2).max(1));
    let vocab = Vocabulary::build(&dialogues, config.vocab_size)?;
    let config = ModelConfig {
        vocab_size: vocab.len(),
        ..config
    };
    config.validate()?;
    let pairs = encode_pairs(&make_pairs(&dialogues, config.context_utterances), &vocab, &config);
    Ok((vocab, config, pairs))
}

/// Human pairs of a corpus text encoded for an existing model.
pub fn encode_corpus(text: &str, bundle: &ModelBundle) -> Vec<EncodedPair> {
    let config = &bundle.model.config;
    let dialogues = parse_corpus(text, config.seq_len.saturating_sub(2).max(1));
    encode_pairs(&make_pairs(&dialogues, config.context_utterances), &bundle.vocab, config)
}
