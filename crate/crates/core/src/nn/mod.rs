//! Layers and optimisation shared by the parser and the translator.

pub mod cells;
pub mod checkpoint;
pub mod layers;
pub mod optim;
pub mod params;
pub mod rnn;

pub use cells::{Cell, GruCell, LstmCell, LstmState};
pub use layers::{dropout, linear, Linear, Mode};
pub use optim::{clip_gradients, global_norm, AdamState, Gradients};
pub use params::{grad_check_params, Graph, ParamStore, Trainable};
pub use rnn::{birnn_encode, length_masks, stacked_birnn_encode, BiEncoding};
