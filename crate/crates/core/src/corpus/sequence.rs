use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize;
use super::vocab::{Vocabulary, EOS, PAD, SEP_TOKEN};
use super::ModelConfig;
use crate::error::{Error, Result};

/// An ordered list of tokenized utterances with alternating speakers.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub utterances: Vec<Vec<String>>,
}

/// A context window of up to N_u utterances (oldest first) and the answer that follows.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialoguePair {
    pub context: Vec<Vec<String>>,
    pub answer: Vec<String>,
}

impl DialoguePair {
    /// Context utterances joined by the separator token.
    pub fn context_tokens(&self) -> Vec<String> {
        join_utterances(&self.context)
    }
}

pub fn join_utterances(utterances: &[Vec<String>]) -> Vec<String> {
    let mut out = Vec::new();
    for (i, u) in utterances.iter().enumerate() {
        if i > 0 {
            out.push(SEP_TOKEN.to_owned());
        }
        out.extend(u.iter().cloned());
    }
    out
}

/// Fixed-length index vector; PAD entries only at the tail.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EncodedSequence {
    ids: Vec<usize>,
    effective_len: usize,
}

impl EncodedSequence {
    /// Truncates `ids` to `len` and pads with PAD. `ids` must not contain PAD.
    pub fn from_ids(ids: &[usize], len: usize) -> Result<Self> {
        if ids.contains(&PAD) {
            return Err(Error::Domain("PAD inside a sequence body".into()));
        }
        let effective_len = ids.len().min(len);
        let mut padded = ids[..effective_len].to_vec();
        padded.resize(len, PAD);
        Ok(Self {
            ids: padded,
            effective_len,
        })
    }

    /// Same tokens, padded (or truncated) to a different length.
    pub fn repadded(&self, len: usize) -> Self {
        Self::from_ids(self.tokens(), len).expect("body never contains PAD")
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    /// The non-PAD prefix.
    pub fn tokens(&self) -> &[usize] {
        &self.ids[..self.effective_len]
    }

    pub fn effective_len(&self) -> usize {
        self.effective_len
    }

    pub fn padded_len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.effective_len == 0
    }

    pub fn ends_with_eos(&self) -> bool {
        self.tokens().last() == Some(&EOS)
    }

    /// Body without a trailing EOS; used when an answer becomes a context.
    pub fn without_eos(&self) -> &[usize] {
        match self.tokens() {
            [body @ .., last] if *last == EOS => body,
            all => all,
        }
    }
}

/// Maps tokens through `vocab` (UNK for misses), appends EOS when asked,
/// truncates to `len`, and pads with PAD.
pub fn encode_pad<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, len: usize, with_eos: bool) -> EncodedSequence {
    let mut ids: Vec<usize> = tokens.iter().map(|t| vocab.id(t.as_ref())).collect();
    if with_eos {
        ids.push(EOS);
    }
    EncodedSequence::from_ids(&ids, len).expect("vocabulary never maps a token to PAD")
}

/// For every utterance after the first, pairs it with the up-to-`context_utterances`
/// utterances before it.
pub fn make_pairs(corpus: &[Dialogue], context_utterances: usize) -> Vec<DialoguePair> {
    let window = context_utterances.max(1);
    let mut pairs = Vec::new();
    for dialogue in corpus {
        for k in 1..dialogue.utterances.len() {
            let start = k.saturating_sub(window);
            pairs.push(DialoguePair {
                context: dialogue.utterances[start..k].to_vec(),
                answer: dialogue.utterances[k].clone(),
            });
        }
    }
    pairs
}

/// A pair encoded for the model: context without EOS, answer with EOS.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedPair {
    pub context: EncodedSequence,
    pub answer: EncodedSequence,
}

/// Encodes a context, keeping the most recent `len` tokens when it is too long.
pub fn encode_context<S: AsRef<str>>(tokens: &[S], vocab: &Vocabulary, len: usize) -> EncodedSequence {
    let start = tokens.len().saturating_sub(len);
    encode_pad(&tokens[start..], vocab, len, false)
}

pub fn encode_pair(pair: &DialoguePair, vocab: &Vocabulary, config: &ModelConfig) -> EncodedPair {
    EncodedPair {
        context: encode_context(&pair.context_tokens(), vocab, config.seq_len),
        answer: encode_pad(&pair.answer, vocab, config.seq_len, true),
    }
}

pub fn encode_pairs(pairs: &[DialoguePair], vocab: &Vocabulary, config: &ModelConfig) -> Vec<EncodedPair> {
    pairs.iter().map(|p| encode_pair(p, vocab, config)).collect()
}

/// Parses the corpus text format: one utterance per line, blank lines between dialogues.
///
/// Utterances are truncated to `max_utterance_tokens`; lines that tokenize to
/// nothing are dropped.
pub fn parse_corpus(text: &str, max_utterance_tokens: usize) -> Vec<Dialogue> {
    let mut dialogues = Vec::new();
    let mut current: Vec<Vec<String>> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                dialogues.push(Dialogue {
                    utterances: std::mem::take(&mut current),
                });
            }
            continue;
        }
        let mut tokens = tokenize(line);
        tokens.truncate(max_utterance_tokens);
        if !tokens.is_empty() {
            current.push(tokens);
        }
    }
    if !current.is_empty() {
        dialogues.push(Dialogue { utterances: current });
    }
    dialogues
}

/// Reads a corpus file; utterances are limited to `seq_len - 2` tokens.
pub fn read_corpus(path: &Path, seq_len: usize) -> Result<Vec<Dialogue>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let dialogues = parse_corpus(&text, seq_len.saturating_sub(2).max(1));
    if dialogues.is_empty() {
        return Err(Error::format(path.display().to_string(), "corpus contains no utterances"));
    }
    Ok(dialogues)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::vocab::{BOS, UNK};
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn vocab_with(words: &[&str]) -> Vocabulary {
        let mut tokens: Vec<String> = ["<pad>", "<bos>", "<eos>", "<unk>"].iter().map(|s| s.to_string()).collect();
        tokens.extend(words.iter().map(|s| s.to_string()));
        Vocabulary::from_tokens(tokens).unwrap()
    }

    #[test]
    fn encode_pad_examples() {
        // indices 5 and 9
        let v = vocab_with(&["w4", "a", "w6", "w7", "w8", "b"]);
        let s = encode_pad(&["a", "b"], &v, 4, false);
        assert_eq!(s.ids(), &[5, 9, 0, 0]);
        assert_eq!(s.effective_len(), 2);

        let empty: [&str; 0] = [];
        let s = encode_pad(&empty, &v, 3, true);
        assert_eq!(s.ids(), &[2, 0, 0]);
        assert_eq!(s.effective_len(), 1);

        let s = encode_pad(&["a", "b", "a", "b", "a", "b"], &v, 4, false);
        assert_eq!(s.ids(), &[5, 9, 5, 9]);
        assert_eq!(s.effective_len(), 4);
    }

    #[test]
    fn unknown_tokens_map_to_unk() {
        let v = vocab_with(&["a"]);
        assert_eq!(encode_pad(&["zzz"], &v, 2, false).ids(), &[UNK, 0]);
    }

    #[test]
    fn context_keeps_most_recent_tokens() {
        let v = vocab_with(&["a", "b", "c"]);
        let s = encode_context(&["a", "b", "c"], &v, 2);
        assert_eq!(s.ids(), &[5, 6]);
    }

    #[test]
    fn make_pairs_examples() {
        let d = Dialogue {
            utterances: vec![toks("u1"), toks("u2"), toks("u3")],
        };
        let pairs = make_pairs(std::slice::from_ref(&d), 2);
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].context, vec![toks("u1")]);
        assert_eq!(pairs[0].answer, toks("u2"));
        assert_eq!(pairs[1].context, vec![toks("u1"), toks("u2")]);
        assert_eq!(pairs[1].answer, toks("u3"));

        let single = Dialogue { utterances: vec![toks("u1")] };
        assert!(make_pairs(&[single], 3).is_empty());

        for p in make_pairs(&[d], 1) {
            assert_eq!(p.context.len(), 1);
        }
    }

    #[test]
    fn context_joins_with_separator() {
        let p = DialoguePair {
            context: vec![toks("hi there"), toks("hello")],
            answer: toks("bye"),
        };
        assert_eq!(p.context_tokens(), ["hi", "there", SEP_TOKEN, "hello"]);
    }

    #[test]
    fn corpus_format() {
        let text = "Hello there!\nHi.\n\n\nHow are you?\nFine, thanks.\nGood.\n";
        let corpus = parse_corpus(text, 10);
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus[0].utterances.len(), 2);
        assert_eq!(corpus[1].utterances[1], ["fine", ",", "thanks", "."]);
        let truncated = parse_corpus("one two three four five\n", 3);
        assert_eq!(truncated[0].utterances[0].len(), 3);
    }

    #[test]
    fn without_eos() {
        let s = EncodedSequence::from_ids(&[7, 8, EOS], 5).unwrap();
        assert_eq!(s.without_eos(), &[7, 8]);
        let s = EncodedSequence::from_ids(&[BOS, 8], 5).unwrap();
        assert_eq!(s.without_eos(), &[BOS, 8]);
    }

    proptest! {
        #[test]
        fn encode_then_decode_restores_tokens(words in proptest::collection::vec(0usize..6, 0..7)) {
            let v = vocab_with(&["a", "b", "c", "d", "e", "f"]);
            let names = ["a", "b", "c", "d", "e", "f"];
            let tokens: Vec<&str> = words.iter().map(|&i| names[i]).collect();
            let s = encode_pad(&tokens, &v, 8, false);
            prop_assert_eq!(v.decode(s.ids()), tokens);
            prop_assert!(s.ids()[s.effective_len()..].iter().all(|&i| i == PAD));
        }

        #[test]
        fn pair_count(lengths in proptest::collection::vec(1usize..6, 1..6), window in 1usize..4) {
            let corpus: Vec<Dialogue> = lengths
                .iter()
                .map(|&n| Dialogue { utterances: (0..n).map(|i| vec![format!("w{i}")]).collect() })
                .collect();
            let expected: usize = lengths.iter().map(|&n| n.saturating_sub(1)).sum();
            prop_assert_eq!(make_pairs(&corpus, window).len(), expected);
        }
    }
}
