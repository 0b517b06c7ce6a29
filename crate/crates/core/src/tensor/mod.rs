//! Dense tensors and a reverse-mode gradient tape.

mod dense;
mod tape;

pub use dense::{broadcast_shape, concat, expand, index_select, segment_sum, ReduceKind, Tensor};
pub use tape::{BinaryKind, CustomBackward, Gradients, Tape, Var};
