use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture dimensions shared by the generator and the discriminator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Padded sequence length (s_s).
    pub seq_len: usize,
    /// Vocabulary size including the reserved entries (s_v).
    pub vocab_size: usize,
    /// Word embedding width (s_e).
    pub embedding_dim: usize,
    /// Generator sentence-embedding width (s_se).
    pub sentence_dim: usize,
    /// Discriminator sentence-embedding width (s_sed).
    pub disc_sentence_dim: usize,
    /// Number of previous utterances in the context window (N_u).
    pub context_utterances: usize,
    /// Width of the generator's hidden dense layer.
    pub hidden_dim: usize,
}

impl ModelConfig {
    /// Dimensions for a full-size corpus.
    pub fn full_scale() -> Self {
        Self {
            seq_len: 50,
            vocab_size: 7000,
            embedding_dim: 100,
            sentence_dim: 300,
            disc_sentence_dim: 300,
            context_utterances: 2,
            hidden_dim: 300,
        }
    }

    /// Small dimensions that train in seconds on a laptop.
    pub fn desk_scale() -> Self {
        Self {
            seq_len: 12,
            vocab_size: 150,
            embedding_dim: 16,
            sentence_dim: 32,
            disc_sentence_dim: 16,
            context_utterances: 2,
            hidden_dim: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("seq_len", self.seq_len),
            ("vocab_size", self.vocab_size),
            ("embedding_dim", self.embedding_dim),
            ("sentence_dim", self.sentence_dim),
            ("disc_sentence_dim", self.disc_sentence_dim),
            ("context_utterances", self.context_utterances),
            ("hidden_dim", self.hidden_dim),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.vocab_size < 5 {
            return Err(Error::Config(format!(
                "vocab_size must be at least 5, got {}",
                self.vocab_size
            )));
        }
        if self.seq_len < 2 {
            return Err(Error::Config("seq_len must be at least 2".into()));
        }
        Ok(())
    }

    pub(crate) fn to_words(self) -> [u64; 7] {
        [
            self.seq_len,
            self.vocab_size,
            self.embedding_dim,
            self.sentence_dim,
            self.disc_sentence_dim,
            self.context_utterances,
            self.hidden_dim,
        ]
        .map(|v| v as u64)
    }

    pub(crate) fn from_words(w: [u64; 7]) -> Self {
        let w = w.map(|v| v as usize);
        Self {
            seq_len: w[0],
            vocab_size: w[1],
            embedding_dim: w[2],
            sentence_dim: w[3],
            disc_sentence_dim: w[4],
            context_utterances: w[5],
            hidden_dim: w[6],
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk_scale()
    }
}

impl fmt::Display for ModelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{{seq_len={}, vocab_size={}, embedding_dim={}, sentence_dim={}, disc_sentence_dim={}, context_utterances={}, hidden_dim={}}}",
            self.seq_len,
            self.vocab_size,
            self.embedding_dim,
            self.sentence_dim,
            self.disc_sentence_dim,
            self.context_utterances,
            self.hidden_dim
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_values() {
        let c = ModelConfig::full_scale();
        assert_eq!(
            (c.context_utterances, c.embedding_dim, c.sentence_dim, c.disc_sentence_dim, c.vocab_size, c.seq_len),
            (2, 100, 300, 300, 7000, 50)
        );
        c.validate().unwrap();
    }

    #[test]
    fn validation() {
        let mut c = ModelConfig::desk_scale();
        c.vocab_size = 4;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ModelConfig::desk_scale();
        c.hidden_dim = 0;
        assert!(c.validate().is_err());
    }
}
