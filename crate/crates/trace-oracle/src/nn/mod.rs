//! Neural primitives: tensors, a reverse-mode tape, LSTM cells, a sigmoid
//! feed-forward head, and Adam.
//!
//! Inference uses the pure functions ([`cell_step`], [`ffn_forward`]);
//! training replays the same arithmetic through [`Tape`] to obtain exact
//! gradients. Both paths share one matvec kernel and apply operations in the
//! same order, so their outputs are bit-identical.

pub mod adam;
pub mod cell;
pub mod ffn;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use cell::{cell_step, CellParams, TapeCell};
pub use ffn::{ffn_forward, FfnParams, TapeFfn};
pub use tape::{Grads, NodeId, Tape, BCE_CLAMP};
pub use tensor::Tensor;

use thiserror::Error;

/// An input or state vector had the wrong width for the parameters it met.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{op}: expected length {expected}, got {got}")]
pub struct ShapeError {
    pub op: &'static str,
    pub expected: usize,
    pub got: usize,
}
