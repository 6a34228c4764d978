//! Generative conversational agent with per-step context conditioning, a
//! token-level discriminator, and end-to-end adversarial training.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: tensors, reverse-mode differentiation, Adam.
//! * [`corpus`]: tokenization, vocabulary, sequence encoding, weight files.
//! * [`model`]: the generator, the discriminator and the answer scores.
//! * [`training`]: teacher forcing, self-conversation and the adversarial loop.
//! * [`evaluation`]: ranking with the tie rule, vote tallies, Jaccard agreement.

pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
