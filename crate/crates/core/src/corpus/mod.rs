//! Corpus ingestion, vocabulary, sequence encoding and persistence.

mod config;
mod sequence;
mod tokenize;
mod vectors;
mod vocab;
pub mod weights;

use std::io::Write;
use std::path::Path;

pub use config::ModelConfig;
pub use sequence::{
    encode_context, encode_pad, encode_pair, encode_pairs, join_utterances, make_pairs, parse_corpus, read_corpus,
    Dialogue, DialoguePair, EncodedPair, EncodedSequence,
};
pub use tokenize::{detokenize, tokenize};
pub use vectors::{load_pretrained_vectors, parse_pretrained_vectors, MISSING_VECTOR_SCALE};
pub use vocab::{
    Vocabulary, BOS, BOS_TOKEN, EOS, EOS_TOKEN, PAD, PAD_TOKEN, SEP_TOKEN, UNK, UNK_TOKEN,
};
pub use weights::{load_weights, load_weights_for, save_weights};

use crate::error::{Error, Result};

/// The bundled ten-dialogue toy corpus, in the corpus text format.
pub const TOY_CORPUS: &str = include_str!("../../data/toy_corpus.txt");

/// Writes to a sibling temporary file, then renames over `path`.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut file = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    file.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(file);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
