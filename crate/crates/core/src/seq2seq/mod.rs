//! Attentional GRU encoder-decoder with optional source syntax.

pub mod model;
pub mod search;
pub mod train;

pub use model::{
    attend, source_units, DecoderStep, EmbeddedParser, Encoded, ModelConfig, SourceInput, SyntaxMode, Translator,
    PARSER_PREFIX,
};
pub use search::{
    beam_search_with, ensemble_decode, greedy_with, mean_log_probs, DecoderState, EnsembleScorer, Hypothesis,
    ModelScorer, Scored, StepScorer,
};
pub use train::{batch_loss, train_epoch, train_step, TrainConfig};

#[cfg(test)]
mod tests;
