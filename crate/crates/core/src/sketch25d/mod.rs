//! Sketch to multi-view depth, normal and mask maps: a U-net style
//! encoder/decoder trained with three supervised terms and an
//! adversarial term from a per-view discriminator.

pub mod config;
pub mod loss;
pub mod model;
pub mod train;

pub use config::{default_encoder_channels, encoder_depth, Sketch25DConfig};
pub use loss::{
    discriminator_loss, loss_adversarial, loss_depth, loss_mask, loss_normal, total_loss_25d, LossNodes, MapTargets, PROB_CLAMP,
};
pub use model::{split_maps, stack_maps, Sketch25DModel};
pub use train::{
    batch_indices, block_means, evaluate_25d, map_errors, train_25d, train_step, Example, LossTrace, MapErrors,
    StepLosses,
};
