use std::collections::HashMap;
use std::path::Path;

use super::sequence::Dialogue;
use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

pub const PAD_TOKEN: &str = "<pad>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";
/// Separator placed between utterances of a multi-utterance context.
pub const SEP_TOKEN: &str = "<sep>";

const RESERVED: [&str; 4] = [PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN];

/// Bidirectional token/index map with reserved entries at indices 0..4.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Keeps the `max_size - 4` most frequent tokens, ties broken lexicographically.
    ///
    /// The utterance separator competes like any other token; its frequency is
    /// the number of utterance boundaries in the corpus.
    pub fn build(corpus: &[Dialogue], max_size: usize) -> Result<Self> {
        if max_size < 5 {
            return Err(Error::Config(format!(
                "vocabulary size must be at least 5, got {max_size}"
            )));
        }
        if corpus.is_empty() {
            return Err(Error::Domain("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut boundaries = 0;
        for dialogue in corpus {
            boundaries += dialogue.utterances.len().saturating_sub(1);
            for tok in dialogue.utterances.iter().flatten() {
                if !RESERVED.contains(&tok.as_str()) {
                    *counts.entry(tok.as_str()).or_default() += 1;
                }
            }
        }
        if boundaries > 0 {
            *counts.entry(SEP_TOKEN).or_default() += boundaries;
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let tokens = RESERVED
            .iter()
            .copied()
            .chain(ranked.into_iter().map(|(t, _)| t).take(max_size - RESERVED.len()))
            .map(str::to_owned)
            .collect();
        Self::from_tokens(tokens)
    }

    /// Builds from an index-ordered token list whose first four entries are the reserved tokens.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < RESERVED.len() || tokens[..RESERVED.len()] != RESERVED {
            return Err(Error::format(
                "vocabulary",
                "the first four entries must be <pad> <bos> <eos> <unk>",
            ));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), i).is_some() {
                return Err(Error::format(format!("vocabulary entry {i}"), format!("duplicate token {tok:?}")));
            }
        }
        Ok(Self { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or UNK.
    pub fn id(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps indices back to tokens, stopping at the first PAD or EOS.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .take_while(|&&i| i != PAD && i != EOS)
            .map(|&i| self.token(i).unwrap_or(UNK_TOKEN).to_owned())
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.tokens.join("\n");
        text.push('\n');
        super::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tokens(text.lines().map(str::to_owned).collect())
    }
}
