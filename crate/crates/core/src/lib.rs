//! Syntax-aware word representations (SAWRs) for attentional neural machine
//! translation.
//!
//! The crate trains a biaffine dependency parser, exposes its encoder states
//! as per-word vectors, and feeds them (after a linear projection) into a
//! GRU encoder-decoder translator next to the ordinary word embeddings. The
//! two explicit-syntax baselines, a bidirectional Tree-GRU and a linearised
//! tree input, share the same translator. Evaluation covers corpus BLEU,
//! paired bootstrap significance, length-bucketed BLEU, attention dumps and
//! ensemble decoding.
//!
//! Module map:
//!
//! * [`tensor`]: dense tensors and the reverse-mode tape everything trains on.
//! * [`nn`]: recurrent cells, encoders, dropout, Adam, clipping, checkpoints.
//! * [`depparse`]: treebank I/O, the biaffine parser, Eisner decoding, LAS.
//! * [`data`]: vocabularies, BPE, batching, tree linearisation.
//! * [`seq2seq`]: the attentional translator, training and beam search.
//! * [`syntax`]: SAWR projection, Tree-GRU, SAWR caches.
//! * [`eval`]: BLEU, significance, alignments, ensembles.
//! * [`toy`]: small synthetic corpora used by tests and demos.

// `!(x > 0.0)` is used on purpose so NaN settings are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod depparse;
pub mod error;
pub mod eval;
pub mod nn;
pub mod rng;
pub mod seq2seq;
pub mod syntax;
pub mod tensor;
pub mod toy;

pub use error::{Error, Result};
pub use tensor::{Tape, Tensor, Var};
