//! Latent-conditioned occupancy field: point-value sampling, the implicit
//! decoder and its weighted loss, autoencoder pretraining, latent fitting,
//! the single-view encoder, and grid evaluation for extraction.

pub mod config;
pub mod model;
pub mod sampling;
pub mod train;

pub use config::{ImplicitConfig, ViewInput, ENCODER_GRID};
pub use model::{grid_tensor, ImplicitModel};
pub use sampling::{sample_point_values, PointValueSet};
pub use train::{
    auto_decode, autoencoder_step, evaluate_grid, extract_mesh, field_iou, implicit_loss, pretrain_autoencoder,
    refresh_latents, train_singleview_encoder, ShapeData, Trace, TraceRow, ViewExample,
};
