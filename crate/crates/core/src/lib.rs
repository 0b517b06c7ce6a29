//! Batched distributions over discrete symbols with differentiable
//! provenance tags, plus the programs, training loop and harness built on
//! them.

pub mod checks;
pub mod data;
pub mod distribution;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod learn;
pub mod par;
pub mod programs;
pub mod provenance;
pub mod symbol;
pub mod tensor;

pub use distribution::{apply, apply_if, Distribution, ProgramContext, SampleStrategy, Tags, UdfResult};
pub use error::{Error, Result};
pub use provenance::ProvenanceKind;
pub use symbol::Symbol;
pub use tensor::{Gradients, Tape, Tensor, Var};
