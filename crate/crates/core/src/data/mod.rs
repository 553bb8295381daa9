//! Corpus preparation: vocabularies, subwords, batching and tree
//! linearization.

pub mod batch;
pub mod bpe;
pub mod corpus;
pub mod linearize;
pub mod vocab;

pub use batch::{filter_and_batch, Batch};
pub use bpe::{decode_bpe, learn_bpe, word_counts, BpeModel};
pub use corpus::{read_parallel, read_tokenized, write_tokenized};
pub use linearize::{delinearize, linearize};
pub use vocab::{Vocabulary, BOS, EOS, PAD, UNK};
