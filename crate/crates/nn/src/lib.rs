//! Minimal reverse-mode differentiation core: a recorded tape of layer
//! and loss ops over dense `f64` tensors, named parameter stores, Adam,
//! and a binary checkpoint format.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
mod kernels;
pub mod optim;
pub mod store;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use error::{NnError, Result};
pub use graph::{sigmoid, BatchNormConfig, Gradients, Graph, Mode, NodeId};
pub use kernels::conv_output_size;
pub use optim::{adam_step, adam_step_selected, adam_update, AdamConfig};
pub use store::{Param, ParamGrads, ParamStore};
pub use tensor::Tensor;
