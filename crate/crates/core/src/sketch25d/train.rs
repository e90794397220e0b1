use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use s2m_nn::{adam_step, AdamConfig, Graph, Mode};

use super::loss::{discriminator_loss, total_loss_25d, MapTargets};
use super::model::{stack_maps, Sketch25DModel};
use crate::error::{CoreError, Result};
use crate::io;
use crate::render::maps::{SketchImage, ViewMap25D};

/// One training pair: an input sketch and its V ground-truth maps.
#[derive(Clone, Debug)]
pub struct Example {
    pub sketch: SketchImage,
    pub views: Vec<ViewMap25D>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLosses {
    pub step: u64,
    pub total: f64,
    pub depth: f64,
    pub normal: f64,
    pub mask: f64,
    pub adv: f64,
    pub disc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    pub rows: Vec<StepLosses>,
}

const TRACE_HEADER: &str = "step,total,depth,normal,mask,adv,disc";

impl LossTrace {
    pub fn totals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.total).collect()
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = io::create(path)?;
        let mut write = |line: String| writeln!(w, "{line}").map_err(|e| CoreError::io(path, e));
        write(TRACE_HEADER.to_string())?;
        for r in &self.rows {
            write(format!(
                "{},{},{},{},{},{},{}",
                r.step, r.total, r.depth, r.normal, r.mask, r.adv, r.disc
            ))?;
        }
        io::flush(w, path)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rows = Vec::new();
        for (i, line) in io::open(path)?.lines().enumerate() {
            let line = line.map_err(|e| CoreError::io(path, e))?;
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let parse_err = |msg: String| CoreError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg,
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(parse_err(format!("expected 7 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| parse_err(format!("{s}: {e}")));
            rows.push(StepLosses {
                step: f[0].parse().map_err(|e| parse_err(format!("{}: {e}", f[0])))?,
                total: num(f[1])?,
                depth: num(f[2])?,
                normal: num(f[3])?,
                mask: num(f[4])?,
                adv: num(f[5])?,
                disc: num(f[6])?,
            });
        }
        Ok(Self { rows })
    }
}

/// Means of consecutive non-overlapping blocks of `width` values; a
/// trailing partial block is dropped.
pub fn block_means(values: &[f64], width: usize) -> Vec<f64> {
    values
        .chunks_exact(width)
        .map(|c| c.iter().sum::<f64>() / width as f64)
        .collect()
}

/// Example indices of the batch used at `step`: a fresh permutation per
/// epoch, so the sequence depends only on the seed and the step.
pub fn batch_indices(seed: u64, step: u64, batch: usize, n: usize) -> Vec<usize> {
    let perm_for = |epoch: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut rng);
        p
    };
    let start = step * batch as u64;
    let mut cached: Option<(u64, Vec<usize>)> = None;
    (0..batch as u64)
        .map(|i| {
            let pos = start + i;
            let epoch = pos / n as u64;
            if cached.as_ref().map(|c| c.0) != Some(epoch) {
                cached = Some((epoch, perm_for(epoch)));
            }
            cached.as_ref().expect("set above").1[(pos % n as u64) as usize]
        })
        .collect()
}

fn adam_configs(model: &Sketch25DModel) -> (AdamConfig, AdamConfig) {
    let c = &model.config;
    let base = AdamConfig {
        lr: c.lr,
        beta1: c.beta1,
        beta2: c.beta2,
        ..AdamConfig::default()
    };
    (base, AdamConfig { lr: c.disc_lr, ..base })
}

/// One iteration: generator forward, a discriminator update on the
/// detached fakes, then a generator update through the updated
/// discriminator.
pub fn train_step(model: &mut Sketch25DModel, batch: &[&Example]) -> Result<StepLosses> {
    let size = model.image_size();
    let v = model.num_views();
    for ex in batch {
        if ex.views.len() != v {
            return Err(CoreError::Dataset(format!("example has {} views, model expects {v}", ex.views.len())));
        }
    }
    let step = model.gen.step_count;
    let (opt_g, opt_d) = adam_configs(model);
    let sketches: Vec<&SketchImage> = batch.iter().map(|e| &e.sketch).collect();
    let real = stack_maps(batch.iter().flat_map(|e| e.views.iter()), size)?;
    let targets = MapTargets::new(&real)?;

    let mut g = Graph::with_seed(model.config.seed ^ step.wrapping_mul(0x2545_f491_4f6c_dd1d));
    let x = g.input(model.sketch_tensor(&sketches)?)?;
    let fake = model.forward(&mut g, x, Mode::Train)?;
    let bn_updates = g.take_buffer_updates();

    let lambda = model.config.lambda;
    let disc = if lambda[3] > 0.0 {
        let mut gd = Graph::new();
        let r = gd.input(real.clone())?;
        let f = gd.input(g.value(fake).clone())?;
        let dr = model.discriminate(&mut gd, r)?;
        let df = model.discriminate(&mut gd, f)?;
        let loss = discriminator_loss(&mut gd, dr, df)?;
        gd.backward_into(loss, &mut model.disc)?;
        adam_step(&mut model.disc, &opt_d);
        gd.value(loss).item()
    } else {
        0.0
    };

    let d_fake = if lambda[3] > 0.0 {
        Some(model.discriminate(&mut g, fake)?)
    } else {
        None
    };
    let nodes = total_loss_25d(&mut g, fake, &targets, d_fake, lambda)?;
    g.backward_into(nodes.total, &mut model.gen)?;
    adam_step(&mut model.gen, &opt_g);
    model.gen.commit_buffers(bn_updates)?;
    Ok(StepLosses {
        step: step + 1,
        total: g.value(nodes.total).item(),
        depth: g.value(nodes.depth).item(),
        normal: g.value(nodes.normal).item(),
        mask: g.value(nodes.mask).item(),
        adv: nodes.adv.map_or(0.0, |a| g.value(a).item()),
        disc,
    })
}

/// Train for `steps` iterations beyond the model's current step,
/// calling `on_checkpoint` every `checkpoint_every` steps and at the end.
pub fn train_25d(
    model: &mut Sketch25DModel,
    examples: &[Example],
    steps: u64,
    mut on_checkpoint: impl FnMut(&Sketch25DModel, &LossTrace) -> Result<()>,
) -> Result<LossTrace> {
    if examples.is_empty() {
        return Err(CoreError::Dataset("no training examples".into()));
    }
    let mut trace = LossTrace::default();
    let every = model.config.checkpoint_every;
    for _ in 0..steps {
        let idx = batch_indices(model.config.seed, model.gen.step_count, model.config.batch_size, examples.len());
        let batch: Vec<&Example> = idx.iter().map(|&i| &examples[i]).collect();
        let losses = train_step(model, &batch)?;
        log::debug!(
            "step {} total {:.4} depth {:.4} normal {:.4} mask {:.4} adv {:.4} disc {:.4}",
            losses.step,
            losses.total,
            losses.depth,
            losses.normal,
            losses.mask,
            losses.adv,
            losses.disc
        );
        trace.rows.push(losses);
        if losses.step % every == 0 {
            on_checkpoint(model, &trace)?;
        }
    }
    if trace.rows.last().is_some_and(|r| r.step % every != 0) {
        on_checkpoint(model, &trace)?;
    }
    Ok(trace)
}

/// Errors over ground-truth foreground pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MapErrors {
    /// Mean absolute depth error per foreground pixel.
    pub depth_l1: f64,
    /// Mean angle between predicted and true normals, in degrees.
    pub normal_deg: f64,
    pub foreground: usize,
}

pub fn map_errors(pred: &[ViewMap25D], gt: &[ViewMap25D]) -> MapErrors {
    let (mut depth, mut angle, mut count) = (0.0, 0.0, 0usize);
    for (p, t) in pred.iter().zip(gt) {
        let s = t.size();
        for row in 0..s {
            for col in 0..s {
                if !t.is_foreground(col, row) {
                    continue;
                }
                depth += (p.depth(col, row) - t.depth(col, row)).abs();
                let (a, b) = (p.normal(col, row), t.normal(col, row));
                let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
                let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / na.max(1e-12);
                angle += dot.clamp(-1.0, 1.0).acos().to_degrees();
                count += 1;
            }
        }
    }
    let c = count.max(1) as f64;
    MapErrors {
        depth_l1: depth / c,
        normal_deg: angle / c,
        foreground: count,
    }
}

/// Eval-mode errors pooled over all examples' foreground pixels.
pub fn evaluate_25d(model: &Sketch25DModel, examples: &[Example]) -> Result<MapErrors> {
    let (mut depth, mut angle, mut count) = (0.0, 0.0, 0usize);
    for ex in examples {
        let pred = model.predict(&ex.sketch)?;
        let e = map_errors(&pred, &ex.views);
        depth += e.depth_l1 * e.foreground as f64;
        angle += e.normal_deg * e.foreground as f64;
        count += e.foreground;
    }
    let c = count.max(1) as f64;
    Ok(MapErrors {
        depth_l1: depth / c,
        normal_deg: angle / c,
        foreground: count,
    })
}
