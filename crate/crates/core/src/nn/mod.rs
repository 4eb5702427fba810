//! Minimal MLP engine: reverse-mode autodiff over matrix nodes, input
//! gradients, differentiable backward passes (for losses that depend on
//! input gradients), and Adam.

mod adam;
mod mlp;
mod tape;

#[cfg(test)]
mod tests;

pub use adam::{adam_step, AdamState, LrSchedule};
pub use mlp::{
    double_backprop_gradient, input_gradient, param_gradient, MlpNodes, MlpParams,
};
pub use tape::{GradTape, NodeId};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("NonScalarOutput: network output size is {output_size}, expected 1")]
    NonScalarOutput { output_size: usize },
    #[error("TapeExhausted: backward already called on this tape")]
    TapeExhausted,
}
