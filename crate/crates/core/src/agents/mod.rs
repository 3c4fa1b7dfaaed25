//! Value-based learners and the replay buffer they share.

pub mod deep;
pub mod replay;
pub mod tabular;

pub use deep::{DeepQ, DeepQConfig};
pub use replay::{ReplayBuffer, Segment, SegmentBatch, Transition};
pub use tabular::{argmax_first, argmax_uniform, TabularQ};
