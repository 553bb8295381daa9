//! Ways of feeding source syntax to the translator: projected parser states
//! (SAWRs), a bidirectional Tree-GRU, and cached parser encodings.
//! Linearized trees need no encoder of their own; see
//! [`data::linearize`](crate::data::linearize).

pub mod cache;
pub mod sawr;
pub mod tree_gru;

pub use cache::SawrCache;
pub use sawr::{sawr_augment, sawr_project};
pub use tree_gru::{batch_by_level, LevelSchedule, TreeGru};
