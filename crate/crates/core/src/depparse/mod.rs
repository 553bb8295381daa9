//! Biaffine dependency parser: trees, treebank I/O, projective decoding,
//! training and attachment scores.

pub mod conll;
pub mod eisner;
pub mod model;
pub mod train;
pub mod tree;

pub use conll::{load_treebank, read_treebank, save_treebank, write_treebank, Sentence};
pub use eisner::{decode_projective, eisner, tree_score, ArcScores};
pub use model::{EncoderLayers, Parser, ParserConfig, ParserNet};
pub use train::{evaluate_las, train_parser, train_parser_with, NonProjective, ParserTrace, ParserTrainConfig};
pub use tree::DependencyTree;
