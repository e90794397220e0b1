//! Latent-conditioned occupancy decoder, the 3-D grid encoder that
//! produces training latents, and the residual single-view encoder.
//!
//! The autoencoder (3-D encoder, decoder and the per-shape latents kept
//! as `latent/<id>` buffers) lives in one store; the view encoder in a
//! second, so training it can never touch the decoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use s2m_nn::{Checkpoint, Graph, NodeId, ParamStore, Tensor};

use super::config::{ImplicitConfig, ENCODER_GRID};
use crate::error::{CoreError, Result};
use crate::geometry::{Vec3, VoxelGrid};

pub const AE_PREFIX: &str = "ae/";
pub const VIEW_PREFIX: &str = "view/";
pub const LATENT_PREFIX: &str = "latent/";

#[derive(Clone, Debug, PartialEq)]
pub struct ImplicitModel {
    pub config: ImplicitConfig,
    /// Side of the square images the view encoder reads.
    pub image_size: usize,
    pub ae: ParamStore,
    pub view: ParamStore,
}

fn glorot_dense(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, i: usize, o: usize) -> Result<()> {
    store.register_glorot(format!("{name}.weight"), &[i, o], i, o, rng)?;
    store.register(format!("{name}.bias"), Tensor::zeros(&[o]))?;
    Ok(())
}

fn glorot_conv(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, o: usize, i: usize, k: &[usize]) -> Result<()> {
    let vol: usize = k.iter().product();
    let mut shape = vec![o, i];
    shape.extend_from_slice(k);
    store.register_glorot(format!("{name}.weight"), &shape, i * vol, o * vol, rng)?;
    store.register(format!("{name}.bias"), Tensor::zeros(&[o]))?;
    Ok(())
}

impl ImplicitModel {
    pub fn new(config: ImplicitConfig, image_size: usize) -> Result<Self> {
        config.validate()?;
        if image_size >> config.view_channels.len() == 0 {
            return Err(CoreError::Config(format!(
                "{} view encoder blocks are too many for {image_size}x{image_size} images",
                config.view_channels.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut ae = ParamStore::new();
        let widths = config.decoder_widths();
        for (l, w) in widths.windows(2).enumerate() {
            glorot_dense(&mut ae, &mut rng, &format!("dec.fc{l}"), w[0], w[1])?;
        }
        let mut in_ch = 1;
        for (j, &c) in config.encoder_channels.iter().enumerate() {
            glorot_conv(&mut ae, &mut rng, &format!("enc3d.conv{j}"), c, in_ch, &[4, 4, 4])?;
            in_ch = c;
        }
        let side = ENCODER_GRID >> config.encoder_channels.len();
        glorot_dense(&mut ae, &mut rng, "enc3d.fc", in_ch * side * side * side, config.latent_dim)?;

        let mut view = ParamStore::new();
        let mut in_ch = config.view_input.channels();
        for (j, &c) in config.view_channels.iter().enumerate() {
            glorot_conv(&mut view, &mut rng, &format!("view.block{j}.conv_a"), c, in_ch, &[3, 3])?;
            glorot_conv(&mut view, &mut rng, &format!("view.block{j}.conv_b"), c, c, &[3, 3])?;
            glorot_conv(&mut view, &mut rng, &format!("view.block{j}.skip"), c, in_ch, &[1, 1])?;
            in_ch = c;
        }
        let side = image_size >> config.view_channels.len();
        glorot_dense(&mut view, &mut rng, "view.fc", in_ch * side * side, config.latent_dim)?;
        Ok(Self {
            config,
            image_size,
            ae,
            view,
        })
    }

    pub fn decoder_param_count(&self) -> usize {
        self.ae.param_count_with_prefix("dec.")
    }

    /// Decoder over `rows × (latent_dim + 3)` inputs, giving `rows × 1`
    /// occupancies.
    pub fn decode(&self, g: &mut Graph, input: NodeId) -> Result<NodeId> {
        let layers = self.config.decoder_widths().len() - 1;
        let mut h = input;
        for l in 0..layers {
            h = g.layer_dense(&self.ae, h, &format!("dec.fc{l}"), true)?;
            h = if l + 1 < layers {
                g.leaky_relu(h, self.config.leaky_slope)?
            } else {
                g.sigmoid(h)?
            };
        }
        Ok(h)
    }

    /// Decoder input for one latent row `1 × L` and points `P × 3`.
    pub fn decoder_input(&self, g: &mut Graph, z: NodeId, points: NodeId) -> Result<NodeId> {
        let p = g.shape(points)[0];
        let zr = g.repeat_rows(z, p)?;
        Ok(g.concat(&[zr, points], 1)?)
    }

    /// 3-D encoder over `B × 1 × 16³` grids, giving `B × latent_dim`.
    pub fn encode_grids(&self, g: &mut Graph, grids: NodeId) -> Result<NodeId> {
        let mut h = grids;
        for j in 0..self.config.encoder_channels.len() {
            h = g.layer_conv(&self.ae, h, &format!("enc3d.conv{j}"), 2, 1, true)?;
            h = g.leaky_relu(h, self.config.leaky_slope)?;
        }
        let b = g.shape(h)[0];
        let flat: usize = g.shape(h)[1..].iter().product();
        let h = g.reshape(h, &[b, flat])?;
        Ok(g.layer_dense(&self.ae, h, "enc3d.fc", true)?)
    }

    /// Residual view encoder over `B × C × S × S`, giving `B × latent_dim`.
    pub fn encode_views(&self, g: &mut Graph, images: NodeId) -> Result<NodeId> {
        let slope = self.config.leaky_slope;
        let mut h = images;
        for j in 0..self.config.view_channels.len() {
            let a = g.layer_conv(&self.view, h, &format!("view.block{j}.conv_a"), 2, 1, true)?;
            let a = g.leaky_relu(a, slope)?;
            let b = g.layer_conv(&self.view, a, &format!("view.block{j}.conv_b"), 1, 1, true)?;
            let s = g.layer_conv(&self.view, h, &format!("view.block{j}.skip"), 2, 0, true)?;
            let sum = g.add(b, s)?;
            h = g.leaky_relu(sum, slope)?;
        }
        let b = g.shape(h)[0];
        let flat: usize = g.shape(h)[1..].iter().product();
        let h = g.reshape(h, &[b, flat])?;
        Ok(g.layer_dense(&self.view, h, "view.fc", true)?)
    }

    /// Occupancy at each point for latent `z`. Points outside the unit
    /// cube are clamped into it.
    pub fn implicit_forward(&self, z: &[f64], points: &[Vec3]) -> Result<Vec<f64>> {
        if z.len() != self.config.latent_dim {
            return Err(CoreError::InvalidArgument(format!(
                "latent has {} values, expected {}",
                z.len(),
                self.config.latent_dim
            )));
        }
        if points.is_empty() {
            return Ok(Vec::new());
        }
        let mut clamped = 0usize;
        let mut flat = Vec::with_capacity(points.len() * 3);
        for p in points {
            for &c in p {
                let v = c.clamp(0.0, 1.0);
                clamped += (v != c) as usize;
                flat.push(v);
            }
        }
        if clamped > 0 {
            log::warn!("clamped {clamped} point coordinates into the unit cube");
        }
        let mut g = Graph::new();
        let zn = g.input(Tensor::new(vec![1, z.len()], z.to_vec())?)?;
        let pn = g.input(Tensor::new(vec![points.len(), 3], flat)?)?;
        let input = self.decoder_input(&mut g, zn, pn)?;
        let out = self.decode(&mut g, input)?;
        Ok(g.value(out).data().to_vec())
    }

    /// Latent of `grid` from the 3-D encoder.
    pub fn encode_grid(&self, grid: &VoxelGrid) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let x = g.input(grid_tensor(&[grid])?)?;
        let z = self.encode_grids(&mut g, x)?;
        Ok(g.value(z).data().to_vec())
    }

    /// Latent predicted by the view encoder for one `C × S × S` image.
    pub fn encode_view(&self, image: &[f64]) -> Result<Vec<f64>> {
        let (c, s) = (self.config.view_input.channels(), self.image_size);
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![1, c, s, s], image.to_vec())?)?;
        let z = self.encode_views(&mut g, x)?;
        Ok(g.value(z).data().to_vec())
    }

    pub fn latent(&self, id: &str) -> Result<Vec<f64>> {
        Ok(self.ae.buffer(&format!("{LATENT_PREFIX}{id}"))?.data().to_vec())
    }

    pub fn latent_ids(&self) -> Vec<String> {
        self.ae
            .buffers()
            .filter_map(|(n, _)| n.strip_prefix(LATENT_PREFIX).map(str::to_string))
            .collect()
    }

    pub fn set_latent(&mut self, id: &str, z: &[f64]) -> Result<()> {
        let name = format!("{LATENT_PREFIX}{id}");
        let t = Tensor::new(vec![z.len()], z.to_vec())?;
        if self.ae.buffer(&name).is_ok() {
            self.ae.set_buffer(&name, t)?;
        } else {
            self.ae.register_buffer(name, t)?;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.add_store(AE_PREFIX, &self.ae);
        ck.add_store(VIEW_PREFIX, &self.view);
        ck.set_config_hash(self.config.structural_hash(self.image_size));
        ck
    }

    /// Rebuild from a checkpoint written under the same structure.
    pub fn from_checkpoint(config: ImplicitConfig, image_size: usize, ck: &Checkpoint) -> Result<Self> {
        let expected = config.structural_hash(image_size);
        match ck.config_hash() {
            Some(h) if h == expected => {}
            found => {
                return Err(CoreError::Config(format!(
                    "checkpoint was written for config hash {found:016x?}, this config hashes to {expected:016x}"
                )))
            }
        }
        let mut model = Self::new(config, image_size)?;
        let latent_key = format!("{AE_PREFIX}{LATENT_PREFIX}");
        let ids: Vec<String> = ck
            .names()
            .filter_map(|n| n.strip_prefix(&latent_key).map(str::to_string))
            .collect();
        for id in ids {
            let t = ck.get(&format!("{latent_key}{id}")).expect("listed");
            model.ae.register_buffer(format!("{LATENT_PREFIX}{id}"), t.clone())?;
        }
        ck.restore_stores(&mut [(AE_PREFIX, &mut model.ae), (VIEW_PREFIX, &mut model.view)])?;
        Ok(model)
    }
}

/// Stack 16³ grids into `B × 1 × 16 × 16 × 16` occupancy values.
pub fn grid_tensor(grids: &[&VoxelGrid]) -> Result<Tensor> {
    let n = ENCODER_GRID;
    let mut data = Vec::with_capacity(grids.len() * n * n * n);
    for grid in grids {
        if grid.resolution() != n {
            return Err(CoreError::ResolutionMismatch(grid.resolution(), n));
        }
        // Occupancy is stored x fastest, matching the W axis.
        data.extend(grid.occupancy().iter().map(|&o| if o { 1.0 } else { 0.0 }));
    }
    Ok(Tensor::new(vec![grids.len(), 1, n, n, n], data)?)
}
