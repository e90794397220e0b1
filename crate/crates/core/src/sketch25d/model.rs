//! Encoder, multi-view decoder and per-view discriminator.
//!
//! Generator parameters live in one store (`enc*`, `dec*`), discriminator
//! parameters in another (`disc.*`), so each has its own Adam state and
//! a backward pass through both never mixes their gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use s2m_nn::{BatchNormConfig, Checkpoint, Graph, Mode, NodeId, ParamStore, Tensor};

use super::config::Sketch25DConfig;
use crate::error::{CoreError, Result};
use crate::render::maps::{SketchImage, ViewMap25D, MAP_CHANNELS};

pub const GEN_PREFIX: &str = "g/";
pub const DISC_PREFIX: &str = "d/";

#[derive(Clone, Debug, PartialEq)]
pub struct Sketch25DModel {
    pub config: Sketch25DConfig,
    pub gen: ParamStore,
    pub disc: ParamStore,
}

fn register_conv(
    store: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    name: &str,
    out_ch: usize,
    in_ch: usize,
    k: usize,
    bias: bool,
) -> Result<()> {
    store.register_glorot(
        format!("{name}.weight"),
        &[out_ch, in_ch, k, k],
        in_ch * k * k,
        out_ch * k * k,
        rng,
    )?;
    if bias {
        store.register(format!("{name}.bias"), Tensor::zeros(&[out_ch]))?;
    }
    Ok(())
}

fn register_bn(store: &mut ParamStore, name: &str, ch: usize) -> Result<()> {
    store.register(format!("{name}.gamma"), Tensor::full(&[ch], 1.0))?;
    store.register(format!("{name}.beta"), Tensor::zeros(&[ch]))?;
    store.register_buffer(format!("{name}.running_mean"), Tensor::zeros(&[ch]))?;
    store.register_buffer(format!("{name}.running_var"), Tensor::full(&[ch], 1.0))?;
    Ok(())
}

impl Sketch25DModel {
    pub fn new(config: Sketch25DConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let enc = config.encoder_schedule();
        let mut gen = ParamStore::new();
        let mut in_ch = 1;
        for (j, &c) in enc.iter().enumerate() {
            register_conv(&mut gen, &mut rng, &format!("enc{j}"), c, in_ch, 4, false)?;
            register_bn(&mut gen, &format!("enc{j}.bn"), c)?;
            in_ch = c;
        }
        let trunks = if config.separate_decoders { config.num_views } else { 1 };
        let head_out = if config.separate_decoders {
            MAP_CHANNELS
        } else {
            MAP_CHANNELS * config.num_views
        };
        for t in 0..trunks {
            let prefix = decoder_prefix(&config, t);
            let mut below = *enc.last().expect("encoder has layers");
            for j in (0..enc.len() - 1).rev() {
                let name = format!("{prefix}{j}");
                register_conv(&mut gen, &mut rng, &name, enc[j], below + enc[j], 3, false)?;
                register_bn(&mut gen, &format!("{name}.bn"), enc[j])?;
                below = enc[j];
            }
            register_conv(&mut gen, &mut rng, &format!("{prefix}head"), head_out, below + 1, 3, true)?;
        }
        let mut disc = ParamStore::new();
        let mut in_ch = MAP_CHANNELS;
        for (j, &c) in config.discriminator_channels.iter().enumerate() {
            register_conv(&mut disc, &mut rng, &format!("disc.conv{j}"), c, in_ch, 4, true)?;
            in_ch = c;
        }
        let side = config.image_size >> config.discriminator_channels.len();
        let flat = in_ch * side * side;
        disc.register_glorot("disc.fc.weight", &[flat, 1], flat, 1, &mut rng)?;
        disc.register("disc.fc.bias", Tensor::zeros(&[1]))?;
        Ok(Self { config, gen, disc })
    }

    pub fn num_views(&self) -> usize {
        self.config.num_views
    }

    pub fn image_size(&self) -> usize {
        self.config.image_size
    }

    /// Stack sketches into a `B×1×S×S` tensor, checking their size.
    pub fn sketch_tensor(&self, sketches: &[&SketchImage]) -> Result<Tensor> {
        let s = self.image_size();
        let mut data = Vec::with_capacity(sketches.len() * s * s);
        for sk in sketches {
            if sk.size != s {
                return Err(CoreError::InvalidArgument(format!(
                    "sketch is {0}x{0} but the model expects {s}x{s}",
                    sk.size
                )));
            }
            data.extend_from_slice(&sk.data);
        }
        Ok(Tensor::new(vec![sketches.len(), 1, s, s], data)?)
    }

    /// Generator forward: `B×1×S×S` sketches to `(B·V)×5×S×S` maps with
    /// tanh depth, unit normals and sigmoid mask.
    pub fn forward(&self, g: &mut Graph, sketch: NodeId, mode: Mode) -> Result<NodeId> {
        let cfg = &self.config;
        let xs = g.shape(sketch).to_vec();
        let s = cfg.image_size;
        if xs.len() != 4 || xs[1] != 1 || xs[2] != s || xs[3] != s {
            return Err(CoreError::InvalidArgument(format!(
                "sketch batch has shape {xs:?}, expected [B, 1, {s}, {s}]"
            )));
        }
        let batch = xs[0];
        let bn = BatchNormConfig::default();
        let slope = cfg.leaky_slope;
        let enc = cfg.encoder_schedule();
        let mut skips = Vec::with_capacity(enc.len());
        let mut h = sketch;
        for j in 0..enc.len() {
            h = g.layer_conv(&self.gen, h, &format!("enc{j}"), 2, 1, false)?;
            h = g.layer_batchnorm(&self.gen, h, &format!("enc{j}.bn"), mode, bn)?;
            h = g.leaky_relu(h, slope)?;
            skips.push(h);
        }
        debug_assert_eq!(g.shape(h), &[batch, enc[enc.len() - 1], 2, 2]);
        let bottleneck = h;
        let trunks = if cfg.separate_decoders { cfg.num_views } else { 1 };
        let mut heads = Vec::with_capacity(trunks);
        for t in 0..trunks {
            let prefix = decoder_prefix(cfg, t);
            let mut h = bottleneck;
            for (rank, j) in (0..enc.len() - 1).rev().enumerate() {
                let name = format!("{prefix}{j}");
                let up = g.upsample_nearest(h, 2)?;
                let cat = g.concat_channels(up, skips[j])?;
                h = g.layer_conv(&self.gen, cat, &name, 1, 1, false)?;
                h = g.layer_batchnorm(&self.gen, h, &format!("{name}.bn"), mode, bn)?;
                h = g.leaky_relu(h, slope)?;
                if rank < 3 {
                    h = g.dropout(h, cfg.dropout, mode)?;
                }
            }
            let up = g.upsample_nearest(h, 2)?;
            let cat = g.concat_channels(up, sketch)?;
            heads.push(g.layer_conv(&self.gen, cat, &format!("{prefix}head"), 1, 1, true)?);
        }
        let raw = if heads.len() == 1 { heads[0] } else { g.concat(&heads, 1)? };
        // B×(V·5)×S×S and (B·V)×5×S×S share one memory layout.
        let raw = g.reshape(raw, &[batch * cfg.num_views, MAP_CHANNELS, s, s])?;
        let depth = g.slice(raw, 1, 0, 1)?;
        let depth = g.tanh(depth)?;
        let normal = g.slice(raw, 1, 1, 3)?;
        let normal = g.l2_normalize_channels(normal)?;
        let mask = g.slice(raw, 1, 4, 1)?;
        let mask = g.sigmoid(mask)?;
        Ok(g.concat(&[depth, normal, mask], 1)?)
    }

    /// Probability that each `5×S×S` map is real, shape `N×1`.
    pub fn discriminate(&self, g: &mut Graph, maps: NodeId) -> Result<NodeId> {
        let n = g.shape(maps)[0];
        let mut h = maps;
        for j in 0..self.config.discriminator_channels.len() {
            h = g.layer_conv(&self.disc, h, &format!("disc.conv{j}"), 2, 1, true)?;
            h = g.leaky_relu(h, self.config.leaky_slope)?;
        }
        let flat: usize = g.shape(h)[1..].iter().product();
        let h = g.reshape(h, &[n, flat])?;
        let logit = g.layer_dense(&self.disc, h, "disc.fc", true)?;
        Ok(g.sigmoid(logit)?)
    }

    /// Eval-mode prediction of all V maps for one sketch.
    pub fn predict(&self, sketch: &SketchImage) -> Result<Vec<ViewMap25D>> {
        let mut g = Graph::new();
        let x = g.input(self.sketch_tensor(&[sketch])?)?;
        let out = self.forward(&mut g, x, Mode::Eval)?;
        split_maps(g.value(out), self.image_size())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.add_store(GEN_PREFIX, &self.gen);
        ck.add_store(DISC_PREFIX, &self.disc);
        ck.set_config_hash(self.config.structural_hash());
        ck
    }

    /// Build a model for `config` and fill it from `ck`, failing if the
    /// checkpoint was written under a different structure.
    pub fn from_checkpoint(config: Sketch25DConfig, ck: &Checkpoint) -> Result<Self> {
        let expected = config.structural_hash();
        match ck.config_hash() {
            Some(h) if h == expected => {}
            found => {
                return Err(CoreError::Config(format!(
                    "checkpoint was written for config hash {found:016x?}, this config hashes to {expected:016x}"
                )))
            }
        }
        let mut model = Self::new(config)?;
        ck.restore_stores(&mut [(GEN_PREFIX, &mut model.gen), (DISC_PREFIX, &mut model.disc)])?;
        Ok(model)
    }
}

fn decoder_prefix(config: &Sketch25DConfig, trunk: usize) -> String {
    if config.separate_decoders {
        format!("dec{trunk}.")
    } else {
        "dec.".to_string()
    }
}

/// Split an `N×5×S×S` tensor into `N` maps.
pub fn split_maps(t: &Tensor, size: usize) -> Result<Vec<ViewMap25D>> {
    let per = MAP_CHANNELS * size * size;
    t.data()
        .chunks(per)
        .map(|c| ViewMap25D::from_planar(size, c.to_vec()))
        .collect()
}

/// Stack maps into an `N×5×S×S` tensor.
pub fn stack_maps<'a>(maps: impl IntoIterator<Item = &'a ViewMap25D>, size: usize) -> Result<Tensor> {
    let mut data = Vec::new();
    let mut n = 0;
    for m in maps {
        if m.size() != size {
            return Err(CoreError::InvalidArgument(format!(
                "map is {0}x{0}, expected {size}x{size}",
                m.size()
            )));
        }
        data.extend_from_slice(m.planar());
        n += 1;
    }
    Ok(Tensor::new(vec![n, MAP_CHANNELS, size, size], data)?)
}
