//! Corpus BLEU, paired bootstrap significance, length-binned scores and
//! attention dumps.

pub mod analysis;
pub mod bleu;
pub mod significance;

pub use analysis::{alignment_record, bleu_by_length, dump_alignments, AlignmentRecord, LengthBin, DEFAULT_LENGTH_EDGES};
pub use bleu::{bleu, sentence_stats, BleuReport, BleuStats};
pub use crate::seq2seq::ensemble_decode;
pub use significance::{bootstrap_significance, BootstrapResult, DEFAULT_SAMPLES};
