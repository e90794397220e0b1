use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::render::camera::ViewCount;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sketch25DConfig {
    pub image_size: usize,
    pub num_views: usize,
    /// Output channels of each stride-2 encoder layer; empty selects the
    /// default schedule ending in 512.
    pub encoder_channels: Vec<usize>,
    pub discriminator_channels: Vec<usize>,
    /// Weights of the depth, normal, mask and adversarial terms.
    pub lambda: [f64; 4],
    pub dropout: f64,
    pub leaky_slope: f64,
    /// One full decoder per view instead of a shared trunk with V heads.
    pub separate_decoders: bool,
    pub batch_size: usize,
    pub lr: f64,
    pub disc_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub steps: u64,
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl Default for Sketch25DConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            num_views: 12,
            encoder_channels: Vec::new(),
            discriminator_channels: vec![16, 32, 64, 64],
            lambda: [1.0, 1.0, 1.0, 0.01],
            dropout: 0.5,
            leaky_slope: 0.2,
            separate_decoders: false,
            batch_size: 4,
            lr: 1e-3,
            disc_lr: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            steps: 300,
            checkpoint_every: 100,
            seed: 1,
        }
    }
}

/// `max(32, 512 / 2^(L−1−j))` for layer `j` of `L`, so the last layer
/// always has 512 channels.
pub fn default_encoder_channels(image_size: usize) -> Vec<usize> {
    let layers = encoder_depth(image_size);
    (0..layers).map(|j| (512 >> (layers - 1 - j).min(9)).max(32)).collect()
}

/// Number of stride-2 layers taking `image_size` down to 2×2.
pub fn encoder_depth(image_size: usize) -> usize {
    image_size.trailing_zeros() as usize - 1
}

impl Sketch25DConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::Config(msg));
        if !self.image_size.is_power_of_two() || self.image_size < 16 {
            return bad(format!("image_size must be a power of two >= 16, got {}", self.image_size));
        }
        if ViewCount::from_count(self.num_views).is_none() {
            return bad(format!("num_views must be 12 or 14, got {}", self.num_views));
        }
        let depth = encoder_depth(self.image_size);
        if !self.encoder_channels.is_empty() && self.encoder_channels.len() != depth {
            return bad(format!(
                "encoder_channels needs {depth} entries for image_size {}, got {}",
                self.image_size,
                self.encoder_channels.len()
            ));
        }
        if self.discriminator_channels.len() != 4 {
            return bad("discriminator_channels needs 4 entries".into());
        }
        if self.encoder_channels.iter().chain(&self.discriminator_channels).any(|&c| c == 0) {
            return bad("channel counts must be positive".into());
        }
        if self.lambda.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return bad(format!("lambda weights must be finite and >= 0, got {:?}", self.lambda));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2 for batch normalization".into());
        }
        for (name, v) in [("lr", self.lr), ("disc_lr", self.disc_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1), got {v}"));
            }
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be positive".into());
        }
        Ok(())
    }

    pub fn encoder_schedule(&self) -> Vec<usize> {
        if self.encoder_channels.is_empty() {
            default_encoder_channels(self.image_size)
        } else {
            self.encoder_channels.clone()
        }
    }

    /// Hash of everything that determines parameter names and shapes.
    pub fn structural_hash(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(b"sketch25d");
        for v in [self.image_size, self.num_views, self.separate_decoders as usize] {
            h.update((v as u64).to_le_bytes());
        }
        for list in [self.encoder_schedule(), self.discriminator_channels.clone()] {
            h.update((list.len() as u64).to_le_bytes());
            for c in list {
                h.update((c as u64).to_le_bytes());
            }
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}
