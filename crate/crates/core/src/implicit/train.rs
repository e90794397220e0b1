use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use s2m_nn::{adam_step, AdamConfig, Graph, NodeId, ParamStore, Tensor};

use super::config::ENCODER_GRID;
use super::model::{grid_tensor, ImplicitModel};
use super::sampling::PointValueSet;
use crate::error::{CoreError, Result};
use crate::extract::{marching_cubes, ScalarField};
use crate::geometry::{normalize_mesh, voxel_center, TriMesh, VoxelGrid};
use crate::io;
use crate::metrics::voxel_iou;

/// Training data for one shape: the encoder's 16³ grid and one point-value
/// set per curriculum resolution.
#[derive(Clone, Debug)]
pub struct ShapeData {
    pub id: String,
    pub encoder_grid: VoxelGrid,
    pub point_sets: Vec<PointValueSet>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub resolution: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = io::create(path)?;
        let mut line = |s: String| writeln!(w, "{s}").map_err(|e| CoreError::io(path, e));
        line("step,resolution,loss".into())?;
        for r in &self.rows {
            line(format!("{},{},{}", r.step, r.resolution, r.loss))?;
        }
        io::flush(w, path)
    }

    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }
}

fn points_tensor(pvs: &PointValueSet) -> Result<Tensor> {
    Ok(Tensor::new(
        vec![pvs.len(), 3],
        pvs.points.iter().flat_map(|p| p.iter().copied()).collect(),
    )?)
}

/// `Σ w·(f(p) − F(p))² / Σ w` over `pvs` for latent row `z` (`1 × L`).
pub fn implicit_loss(g: &mut Graph, model: &ImplicitModel, z: NodeId, pvs: &PointValueSet) -> Result<NodeId> {
    if pvs.is_empty() {
        return Err(CoreError::InvalidArgument("point-value set is empty".into()));
    }
    let pts = g.input(points_tensor(pvs)?)?;
    let input = model.decoder_input(g, z, pts)?;
    let f = model.decode(g, input)?;
    Ok(g.weighted_mse(
        f,
        Tensor::new(vec![pvs.len(), 1], pvs.labels.clone())?,
        Tensor::new(vec![pvs.len(), 1], pvs.weights.clone())?,
    )?)
}

fn adam(model: &ImplicitModel, lr: f64) -> AdamConfig {
    AdamConfig {
        lr,
        beta1: model.config.beta1,
        beta2: model.config.beta2,
        ..AdamConfig::default()
    }
}

/// Curriculum stage (index into `resolutions`) of global step `t`.
fn stage_of(steps: &[u64], t: u64) -> Option<usize> {
    let mut end = 0;
    for (i, &s) in steps.iter().enumerate() {
        end += s;
        if t < end {
            return Some(i);
        }
    }
    None
}

/// Points used by `shape` at `step`: all of them, or a seeded random
/// subset of `points_per_shape`.
fn step_points(model: &ImplicitModel, pvs: &PointValueSet, step: u64, shape: usize) -> PointValueSet {
    let k = model.config.points_per_shape;
    if k == 0 || k >= pvs.len() {
        return pvs.clone();
    }
    let seed = model.config.seed ^ step.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (shape as u64) << 48;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, pvs.len(), k).into_vec();
    idx.sort_unstable();
    pvs.subset(&idx)
}

/// One autoencoder update over every shape at curriculum `stage`.
pub fn autoencoder_step(model: &mut ImplicitModel, shapes: &[ShapeData], stage: usize) -> Result<f64> {
    let step = model.ae.step_count;
    let grids: Vec<&VoxelGrid> = shapes.iter().map(|s| &s.encoder_grid).collect();
    let mut g = Graph::new();
    let x = g.input(grid_tensor(&grids)?)?;
    let z = model.encode_grids(&mut g, x)?;
    let mut inputs = Vec::with_capacity(shapes.len());
    let (mut labels, mut weights) = (Vec::new(), Vec::new());
    for (b, shape) in shapes.iter().enumerate() {
        let pvs = shape
            .point_sets
            .get(stage)
            .ok_or_else(|| CoreError::InvalidArgument(format!("shape {} lacks curriculum stage {stage}", shape.id)))?;
        let pvs = step_points(model, pvs, step, b);
        let zb = g.slice(z, 0, b, 1)?;
        let pts = g.input(points_tensor(&pvs)?)?;
        inputs.push(model.decoder_input(&mut g, zb, pts)?);
        labels.extend_from_slice(&pvs.labels);
        weights.extend_from_slice(&pvs.weights);
    }
    let all = g.concat(&inputs, 0)?;
    let f = model.decode(&mut g, all)?;
    let rows = labels.len();
    let loss = g.weighted_mse(
        f,
        Tensor::new(vec![rows, 1], labels)?,
        Tensor::new(vec![rows, 1], weights)?,
    )?;
    g.backward_into(loss, &mut model.ae)?;
    let opt = adam(model, model.config.lr_at(step));
    adam_step(&mut model.ae, &opt);
    Ok(g.value(loss).item())
}

/// Store each shape's encoder latent as `latent/<id>`.
pub fn refresh_latents(model: &mut ImplicitModel, shapes: &[ShapeData]) -> Result<()> {
    for s in shapes {
        let z = model.encode_grid(&s.encoder_grid)?;
        model.set_latent(&s.id, &z)?;
    }
    Ok(())
}

/// Train encoder and decoder jointly through the resolution curriculum,
/// resuming from the store's step counter. Latents are refreshed before
/// every checkpoint and at the end.
pub fn pretrain_autoencoder(
    model: &mut ImplicitModel,
    shapes: &[ShapeData],
    mut on_checkpoint: impl FnMut(&ImplicitModel, &Trace) -> Result<()>,
) -> Result<Trace> {
    if shapes.is_empty() {
        return Err(CoreError::Dataset("no shapes to train on".into()));
    }
    for s in shapes {
        if s.encoder_grid.resolution() != ENCODER_GRID {
            return Err(CoreError::ResolutionMismatch(s.encoder_grid.resolution(), ENCODER_GRID));
        }
    }
    let steps = model.config.steps.clone();
    let every = model.config.checkpoint_every;
    let mut trace = Trace::default();
    while let Some(stage) = stage_of(&steps, model.ae.step_count) {
        let loss = autoencoder_step(model, shapes, stage)?;
        let row = TraceRow {
            step: model.ae.step_count,
            resolution: model.config.resolutions[stage],
            loss,
        };
        log::debug!("autoencoder step {} res {} loss {:.6}", row.step, row.resolution, loss);
        trace.rows.push(row);
        if row.step % every == 0 {
            refresh_latents(model, shapes)?;
            on_checkpoint(model, &trace)?;
        }
    }
    refresh_latents(model, shapes)?;
    if trace.rows.last().is_some_and(|r| r.step % every != 0) {
        on_checkpoint(model, &trace)?;
    }
    Ok(trace)
}

/// Fit a latent to `pvs` with the decoder frozen, starting from the mean
/// stored latent.
/// Returns the latent and the final loss.
pub fn auto_decode(model: &ImplicitModel, pvs: &PointValueSet, steps: u64, lr: f64) -> Result<(Vec<f64>, f64)> {
    let dim = model.config.latent_dim;
    // Start from the mean training latent; zero when none are stored.
    let ids = model.latent_ids();
    let mut init = vec![0.0; dim];
    for id in &ids {
        for (a, b) in init.iter_mut().zip(model.latent(id)?) {
            *a += b / ids.len() as f64;
        }
    }
    let mut zs = ParamStore::new();
    zs.register("z", Tensor::new(vec![1, dim], init)?)?;
    let opt = adam(model, lr);
    let mut last = f64::NAN;
    for _ in 0..steps {
        let mut g = Graph::new();
        let z = g.param(&zs, "z")?;
        let loss = implicit_loss(&mut g, model, z, pvs)?;
        let grads = g.backward(loss)?;
        zs.set_grads(grads.params())?;
        adam_step(&mut zs, &opt);
        last = g.value(loss).item();
    }
    Ok((zs.value("z")?.data().to_vec(), last))
}

/// One single-view training pair: encoder input image (`C × S × S`) and
/// the target latent.
#[derive(Clone, Debug)]
pub struct ViewExample {
    pub image: Vec<f64>,
    pub latent: Vec<f64>,
}

/// Regress view-encoder outputs onto target latents with mean squared
/// error. Only the view store changes.
pub fn train_singleview_encoder(
    model: &mut ImplicitModel,
    examples: &[ViewExample],
    steps: u64,
    mut on_checkpoint: impl FnMut(&ImplicitModel, &[f64]) -> Result<()>,
) -> Result<Vec<f64>> {
    if examples.is_empty() {
        return Err(CoreError::Dataset("no view encoder examples".into()));
    }
    let (c, s, dim) = (model.config.view_input.channels(), model.image_size, model.config.latent_dim);
    let mut images = Vec::with_capacity(examples.len() * c * s * s);
    let mut targets = Vec::with_capacity(examples.len() * dim);
    for ex in examples {
        if ex.image.len() != c * s * s || ex.latent.len() != dim {
            return Err(CoreError::InvalidArgument(format!(
                "view example has {} pixels and a {}-d latent, expected {} and {dim}",
                ex.image.len(),
                ex.latent.len(),
                c * s * s
            )));
        }
        images.extend_from_slice(&ex.image);
        targets.extend_from_slice(&ex.latent);
    }
    let images = Tensor::new(vec![examples.len(), c, s, s], images)?;
    let targets = Tensor::new(vec![examples.len(), dim], targets)?;
    let opt = adam(model, model.config.view_lr);
    let every = model.config.checkpoint_every;
    let mut losses = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        let mut g = Graph::new();
        let x = g.input(images.clone())?;
        let z = model.encode_views(&mut g, x)?;
        let loss = g.mse(z, targets.clone())?;
        g.backward_into(loss, &mut model.view)?;
        adam_step(&mut model.view, &opt);
        losses.push(g.value(loss).item());
        log::debug!("view encoder step {} loss {:.6}", model.view.step_count, g.value(loss).item());
        if model.view.step_count % every == 0 {
            on_checkpoint(model, &losses)?;
        }
    }
    if model.view.step_count % every != 0 {
        on_checkpoint(model, &losses)?;
    }
    Ok(losses)
}

const GRID_CHUNK: usize = 4096;

/// Decoder values at the `n³` voxel centers, x fastest. Chunks are
/// evaluated in parallel; every point's value is independent of its
/// chunk, so the result does not depend on the thread count.
pub fn evaluate_grid(model: &ImplicitModel, z: &[f64], n: usize) -> Result<ScalarField> {
    if n < 2 {
        return Err(CoreError::InvalidArgument(format!("grid resolution must be >= 2, got {n}")));
    }
    let points: Vec<[f64; 3]> = (0..n * n * n)
        .map(|idx| {
            let (i, j, k) = (idx % n, idx / n % n, idx / (n * n));
            [voxel_center(i, n), voxel_center(j, n), voxel_center(k, n)]
        })
        .collect();
    let chunks: Vec<Vec<f64>> = points
        .par_chunks(GRID_CHUNK)
        .map(|c| model.implicit_forward(z, c))
        .collect::<Result<_>>()?;
    ScalarField::new(n, chunks.concat())
}

/// IoU between `field > threshold` and `grid` at matching resolution.
pub fn field_iou(field: &ScalarField, grid: &VoxelGrid, threshold: f64) -> Result<f64> {
    let n = field.resolution();
    let occ = field.values().iter().map(|&v| v > threshold).collect();
    voxel_iou(&VoxelGrid::from_occupancy(n, occ)?, grid)
}

/// Field → iso-surface at `threshold` → normalized into the unit cube.
/// An empty surface yields an empty mesh and a warning.
pub fn extract_mesh(model: &ImplicitModel, z: &[f64], n: usize, threshold: f64) -> Result<TriMesh> {
    let field = evaluate_grid(model, z, n)?;
    let mesh = marching_cubes(&field, threshold);
    if mesh.is_empty() {
        log::warn!("field has no {threshold} iso-surface at resolution {n}; mesh is empty");
        return Ok(mesh);
    }
    normalize_mesh(&mesh)
}
