use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};

/// What the single-view encoder reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewInput {
    /// The selected five-channel 2.5D map.
    Map,
    /// The one-channel sketch.
    Sketch,
}

impl ViewInput {
    pub fn channels(self) -> usize {
        match self {
            ViewInput::Map => 5,
            ViewInput::Sketch => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImplicitConfig {
    pub latent_dim: usize,
    /// 5 (extended) or 6 (original, for the ablation).
    pub decoder_layers: usize,
    /// Hidden widths of the 5-layer decoder; the 6-layer variant repeats
    /// the first width once more.
    pub hidden: Vec<usize>,
    pub leaky_slope: f64,
    /// Weight of points with a differently labelled face neighbor.
    pub surface_weight: f64,
    /// Label outside points 1 instead of inside points.
    pub invert_labels: bool,
    /// Channels of the stride-2 3-D encoder layers on the 16³ input grid.
    pub encoder_channels: Vec<usize>,
    /// Point-value resolutions trained in order.
    pub resolutions: Vec<usize>,
    /// Autoencoder steps spent at each entry of `resolutions`.
    pub steps: Vec<u64>,
    /// Points drawn per shape per step; 0 uses every voxel center.
    pub points_per_shape: usize,
    pub lr: f64,
    /// Autoencoder learning rate at the last step as a fraction of `lr`,
    /// decayed geometrically over all curriculum steps.
    pub lr_final_ratio: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub view_input: ViewInput,
    pub view_channels: Vec<usize>,
    pub view_steps: u64,
    pub view_lr: f64,
    pub autodecode_steps: u64,
    pub autodecode_lr: f64,
    pub checkpoint_every: u64,
    pub seed: u64,
}

impl Default for ImplicitConfig {
    fn default() -> Self {
        Self {
            latent_dim: 128,
            decoder_layers: 5,
            hidden: vec![512, 512, 256, 128],
            leaky_slope: 0.2,
            surface_weight: 4.0,
            invert_labels: false,
            encoder_channels: vec![16, 32, 64],
            resolutions: vec![16, 32],
            steps: vec![300, 100],
            points_per_shape: 1024,
            lr: 3e-4,
            lr_final_ratio: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            view_input: ViewInput::Map,
            view_channels: vec![16, 32, 64, 128],
            view_steps: 300,
            view_lr: 1e-3,
            autodecode_steps: 300,
            autodecode_lr: 1e-2,
            checkpoint_every: 100,
            seed: 2,
        }
    }
}

/// Resolution of the grid the 3-D encoder reads.
pub const ENCODER_GRID: usize = 16;

impl ImplicitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::Config(msg));
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive".into());
        }
        if !matches!(self.decoder_layers, 5 | 6) {
            return bad(format!("decoder_layers must be 5 or 6, got {}", self.decoder_layers));
        }
        if self.hidden.len() != 4 || self.hidden.iter().any(|&w| w == 0) {
            return bad(format!("hidden needs 4 positive widths, got {:?}", self.hidden));
        }
        if !(self.surface_weight > 0.0 && self.surface_weight.is_finite()) {
            return bad(format!("surface_weight must be positive, got {}", self.surface_weight));
        }
        let enc_out = ENCODER_GRID >> self.encoder_channels.len();
        if self.encoder_channels.is_empty() || enc_out == 0 || self.encoder_channels.contains(&0) {
            return bad(format!(
                "encoder_channels needs 1 to 4 positive entries, got {:?}",
                self.encoder_channels
            ));
        }
        if self.resolutions.is_empty() || self.resolutions.iter().any(|&n| n < 2) {
            return bad(format!("resolutions must be >= 2, got {:?}", self.resolutions));
        }
        if self.steps.len() != self.resolutions.len() {
            return bad(format!(
                "steps needs one entry per resolution ({}), got {}",
                self.resolutions.len(),
                self.steps.len()
            ));
        }
        if self.view_channels.is_empty() || self.view_channels.contains(&0) {
            return bad(format!("view_channels must be positive, got {:?}", self.view_channels));
        }
        for (name, v) in [("lr", self.lr), ("view_lr", self.view_lr), ("autodecode_lr", self.autodecode_lr)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.lr_final_ratio > 0.0 && self.lr_final_ratio <= 1.0) {
            return bad(format!("lr_final_ratio must be in (0, 1], got {}", self.lr_final_ratio));
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

    /// Autoencoder learning rate at 0-based global step `t`.
    pub fn lr_at(&self, t: u64) -> f64 {
        let total: u64 = self.steps.iter().sum();
        if total <= 1 {
            return self.lr;
        }
        self.lr * self.lr_final_ratio.powf(t as f64 / (total - 1) as f64)
    }

    /// Layer widths from input to output, e.g. `131 → 512 → 512 → 256 → 128 → 1`.
    pub fn decoder_widths(&self) -> Vec<usize> {
        let mut w = vec![self.latent_dim + 3];
        if self.decoder_layers == 6 {
            w.push(self.hidden[0]);
        }
        w.extend_from_slice(&self.hidden);
        w.push(1);
        w
    }

    /// Hash of everything that determines parameter names and shapes.
    pub fn structural_hash(&self, image_size: usize) -> u64 {
        let mut h = Sha256::new();
        h.update(b"implicit");
        let view_mode = self.view_input as u64;
        for v in [self.latent_dim as u64, self.decoder_layers as u64, image_size as u64, view_mode] {
            h.update(v.to_le_bytes());
        }
        for list in [&self.hidden, &self.encoder_channels, &self.view_channels] {
            h.update((list.len() as u64).to_le_bytes());
            for &c in list.iter() {
                h.update((c as u64).to_le_bytes());
            }
        }
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }
}
