//! Contextual biasing for n-gram language-model decoding.
//!
//! Bias scores are derived once, at training time, from an unsupervised
//! class-based model: every vocabulary word gets `-log P(w | class(w))`. At
//! inference the scores are looked up for whichever words or phrases the
//! caller supplies as context; no contextual language model is ever built.
//!
//! Pipeline: [`corpus`] → [`ngram_lm`] and [`clustering`] → [`bias`] →
//! [`decode_sim`] → [`eval`].

pub mod bias;
pub mod clustering;
pub mod corpus;
pub mod decode_sim;
mod error;
pub mod eval;
pub mod ngram_lm;

pub use error::{Error, Result};
