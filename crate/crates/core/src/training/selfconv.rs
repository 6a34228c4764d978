use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{EncodedPair, EncodedSequence};
use crate::error::{Error, Result};
use crate::model::Gca;

/// One machine dialogue pair and the human context that started it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachinePair {
    pub seed: EncodedSequence,
    pub context: EncodedSequence,
    pub answer: EncodedSequence,
}

impl MachinePair {
    pub fn to_pair(&self) -> EncodedPair {
        EncodedPair {
            context: self.context.clone(),
            answer: self.answer.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MachineSet {
    pub pairs: Vec<MachinePair>,
}

impl MachineSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Builds `count` machine pairs by letting the generator talk to itself.
///
/// Seeds are human contexts in a shuffled order drawn from `seed`, reused
/// cyclically. From a seed, each turn decodes an answer and feeds it back
/// (without EOS) as the next context. The final two utterances form the
/// pair: the context is the second-to-last utterance alone.
pub fn self_conversation(
    model: &Gca,
    human: &[EncodedPair],
    count: usize,
    turns: usize,
    seed: u64,
) -> Result<MachineSet> {
    if human.is_empty() {
        return Err(Error::Usage("self-conversation needs at least one human context".into()));
    }
    if turns < 2 {
        return Err(Error::Config("self-conversation needs at least two turns".into()));
    }
    let len = model.config.seq_len;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = Vec::new();
    let mut pairs = Vec::with_capacity(count);
    while pairs.len() < count {
        if order.is_empty() {
            order = (0..human.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let start = &human[order.pop().expect("refilled above")].context;
        let mut context = start.clone();
        let mut answer = model.greedy_decode(&context)?.answer;
        for _ in 1..turns {
            context = EncodedSequence::from_ids(answer.without_eos(), len)?;
            answer = model.greedy_decode(&context)?.answer;
        }
        pairs.push(MachinePair {
            seed: start.clone(),
            context,
            answer,
        });
    }
    Ok(MachineSet { pairs })
}
