//! The five commands: synthetic data generation, the two training stages,
//! single-sketch inference and evaluation.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use s2m_nn::Checkpoint;

use crate::config::PipelineConfig;
use crate::dataset::{self, sketch_file, view_file, voxel_file, Dataset};
use crate::error::{CoreError, Result};
use crate::geometry::{laplacian_smooth, normalize_mesh, sample_surface, save_obj, voxelize, PointCloud, ShapeRegistry, TriMesh};
use crate::implicit::{
    extract_mesh, pretrain_autoencoder, sample_point_values, train_singleview_encoder, ImplicitModel, ShapeData,
    Trace, ViewExample, ViewInput, ENCODER_GRID,
};
use crate::metrics::{EvalInput, EvalReport, MetricRegistry};
use crate::render::maps::BACKGROUND;
use crate::render::{icosahedron_viewpoints, render_sketch_proxy, render_view25d, SketchImage, ViewMap25D};
use crate::sketch25d::{train_25d, Example, LossTrace, Sketch25DModel};

/// Write the synthetic dataset described by `cfg.data` under `out`,
/// returning the shape ids.
pub fn gen_synth(cfg: &PipelineConfig, out: &Path) -> Result<Vec<String>> {
    let d = &cfg.data;
    let registry = ShapeRegistry::builtin();
    let mut rng = ChaCha8Rng::seed_from_u64(d.seed);
    let viewpoints = icosahedron_viewpoints(cfg.view_count(), cfg.stage1.image_size, d.half_extent);
    let mut ids = Vec::with_capacity(d.shapes.len());
    for (i, name) in d.shapes.iter().enumerate() {
        let shape = registry.create(name, &mut rng)?;
        let mesh = normalize_mesh(&shape.mesh())?;
        let id = format!("{i:03}_{name}");
        let dir = out.join(&id);
        save_obj(&mesh, dir.join("mesh.obj"))?;
        for &n in &d.voxel_resolutions {
            voxelize(&mesh, n)?.save(dir.join(voxel_file(n)))?;
        }
        let cloud = sample_surface(&mesh, d.point_samples, d.seed.wrapping_add(i as u64))?;
        PointCloud::new(cloud.points).save_xyz(dir.join("points.xyz"))?;
        for (v, vp) in viewpoints.iter().enumerate() {
            let map = render_view25d(&mesh, vp);
            map.validate()
                .map_err(|msg| CoreError::Dataset(format!("{id} view {v}: {msg}")))?;
            map.save(dir.join(view_file(v)))?;
            render_sketch_proxy(&map, d.sketch).save(dir.join(sketch_file(v)))?;
        }
        log::info!("generated {id}");
        ids.push(id);
    }
    dataset::write_manifest(out, &ids)?;
    Ok(ids)
}

fn trace_path(ckpt: &Path, suffix: &str) -> PathBuf {
    let mut name = ckpt.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    ckpt.with_file_name(name)
}

fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CoreError::io(dir, e))?;
    }
    ck.save(path).map_err(CoreError::from)
}

/// Stage-1 training pairs: the selected view's sketch with all V maps.
pub fn stage1_examples(cfg: &PipelineConfig, data: &Dataset) -> Result<Vec<Example>> {
    let view = cfg.view_index();
    data.ids()
        .iter()
        .map(|id| {
            Ok(Example {
                sketch: data.sketch(id, view)?,
                views: data.views(id, cfg.stage1.num_views)?,
            })
        })
        .collect()
}

fn load_or_init_25d(cfg: &PipelineConfig, ckpt: &Path, resume: bool) -> Result<Sketch25DModel> {
    if resume && ckpt.exists() {
        let model = Sketch25DModel::from_checkpoint(cfg.stage1.clone(), &Checkpoint::load(ckpt)?)?;
        log::info!("resuming stage 1 from {} at step {}", ckpt.display(), model.gen.step_count);
        Ok(model)
    } else {
        Sketch25DModel::new(cfg.stage1.clone())
    }
}

/// Train Stage 1 up to `cfg.stage1.steps` total steps, writing the
/// checkpoint and `<ckpt>.trace.csv` every `checkpoint_every` steps.
pub fn train_stage1(cfg: &PipelineConfig, data: &Dataset, ckpt: &Path, resume: bool) -> Result<Sketch25DModel> {
    let examples = stage1_examples(cfg, data)?;
    let mut model = load_or_init_25d(cfg, ckpt, resume)?;
    log::info!(
        "stage 1: {} generator and {} discriminator parameters",
        model.gen.param_count(),
        model.disc.param_count()
    );
    let trace_file = trace_path(ckpt, ".trace.csv");
    let mut prior = if resume && model.gen.step_count > 0 && trace_file.exists() {
        LossTrace::load_csv(&trace_file)?
    } else {
        LossTrace::default()
    };
    prior.rows.retain(|r| r.step <= model.gen.step_count);
    let remaining = cfg.stage1.steps.saturating_sub(model.gen.step_count);
    let trace = train_25d(&mut model, &examples, remaining, |m, t| {
        save_checkpoint(&m.to_checkpoint(), ckpt)?;
        let mut all = prior.clone();
        all.rows.extend_from_slice(&t.rows);
        all.save_csv(&trace_file)
    })?;
    if let Some(last) = trace.rows.last() {
        log::info!("stage 1 finished at step {} with loss {:.4}", last.step, last.total);
    } else {
        save_checkpoint(&model.to_checkpoint(), ckpt)?;
    }
    Ok(model)
}

/// Autoencoder inputs for every shape in `data`.
pub fn stage2_shapes(cfg: &PipelineConfig, data: &Dataset) -> Result<Vec<ShapeData>> {
    let s2 = &cfg.stage2;
    data.ids()
        .iter()
        .map(|id| {
            let point_sets = s2
                .resolutions
                .iter()
                .map(|&n| sample_point_values(&data.voxels(id, n)?, s2.surface_weight, s2.invert_labels))
                .collect::<Result<_>>()?;
            Ok(ShapeData {
                id: id.clone(),
                encoder_grid: data.voxels(id, ENCODER_GRID)?,
                point_sets,
            })
        })
        .collect()
}

/// View-encoder input for one shape: the selected ground-truth map or
/// its sketch, depending on the configured input mode.
pub fn view_image(cfg: &PipelineConfig, data: &Dataset, id: &str) -> Result<Vec<f64>> {
    let v = cfg.view_index();
    Ok(match cfg.stage2.view_input {
        ViewInput::Map => data.view(id, v)?.planar().to_vec(),
        ViewInput::Sketch => data.sketch(id, v)?.data,
    })
}

/// Train the autoencoder through the curriculum, then the single-view
/// encoder onto the resulting latents. Resumes from `ckpt` when asked.
pub fn train_stage2(cfg: &PipelineConfig, data: &Dataset, ckpt: &Path, resume: bool) -> Result<ImplicitModel> {
    let shapes = stage2_shapes(cfg, data)?;
    let size = cfg.stage1.image_size;
    let mut model = if resume && ckpt.exists() {
        let m = ImplicitModel::from_checkpoint(cfg.stage2.clone(), size, &Checkpoint::load(ckpt)?)?;
        log::info!(
            "resuming stage 2 from {} at autoencoder step {}, view step {}",
            ckpt.display(),
            m.ae.step_count,
            m.view.step_count
        );
        m
    } else {
        ImplicitModel::new(cfg.stage2.clone(), size)?
    };
    log::info!(
        "stage 2: {}-layer decoder with {} parameters",
        cfg.stage2.decoder_layers,
        model.decoder_param_count()
    );
    let trace_file = trace_path(ckpt, ".trace.csv");
    let trace = pretrain_autoencoder(&mut model, &shapes, |m, t: &Trace| {
        save_checkpoint(&m.to_checkpoint(), ckpt)?;
        t.save_csv(&trace_file)
    })?;
    if let Some(last) = trace.rows.last() {
        log::info!("autoencoder finished at step {} with loss {:.5}", last.step, last.loss);
    }
    let examples = data
        .ids()
        .iter()
        .map(|id| {
            Ok(ViewExample {
                image: view_image(cfg, data, id)?,
                latent: model.latent(id).map_err(|_| {
                    CoreError::Dataset(format!("no pretrained latent for shape `{id}`; run the autoencoder first"))
                })?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let remaining = cfg.stage2.view_steps.saturating_sub(model.view.step_count);
    let view_trace = trace_path(ckpt, ".view.csv");
    let losses = train_singleview_encoder(&mut model, &examples, remaining, |m, l| {
        save_checkpoint(&m.to_checkpoint(), ckpt)?;
        write_losses(&view_trace, l)
    })?;
    if let Some(l) = losses.last() {
        log::info!("view encoder finished at step {} with loss {l:.6}", model.view.step_count);
    }
    save_checkpoint(&model.to_checkpoint(), ckpt)?;
    Ok(model)
}

fn write_losses(path: &Path, losses: &[f64]) -> Result<()> {
    let mut text = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        text.push_str(&format!("{},{l}\n", i + 1));
    }
    std::fs::write(path, text).map_err(|e| CoreError::io(path, e))
}

/// Turn a predicted map into the ground-truth encoding: pixels with mask
/// below 0.5 become background, the rest get mask 1.
pub fn clean_predicted_map(map: &ViewMap25D) -> ViewMap25D {
    let s = map.size();
    let mut out = map.clone();
    for row in 0..s {
        for col in 0..s {
            let mut p = map.pixel(col, row);
            if p[4] < 0.5 {
                p = BACKGROUND;
            } else {
                p[4] = 1.0;
            }
            out.set_pixel(col, row, p);
        }
    }
    out
}

/// Step size of the optional smoothing passes.
pub const SMOOTH_LAMBDA: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct InferOutput {
    pub mesh: TriMesh,
    /// The cleaned predicted map that was encoded.
    pub view: ViewMap25D,
}

/// Sketch → Stage-1 maps → selected view → latent → mesh, writing the
/// OBJ and `<out stem>_view.s2m25d` next to it.
pub fn infer(
    cfg: &PipelineConfig,
    sketch: &SketchImage,
    ckpt_25d: &Path,
    ckpt_3d: &Path,
    out_obj: &Path,
) -> Result<InferOutput> {
    let stage1 = Sketch25DModel::from_checkpoint(cfg.stage1.clone(), &Checkpoint::load(ckpt_25d)?)?;
    let stage2 = ImplicitModel::from_checkpoint(cfg.stage2.clone(), cfg.stage1.image_size, &Checkpoint::load(ckpt_3d)?)?;
    let maps = stage1.predict(sketch)?;
    let view = clean_predicted_map(&maps[cfg.view_index()]);
    let image = match cfg.stage2.view_input {
        ViewInput::Map => view.planar().to_vec(),
        ViewInput::Sketch => sketch.data.clone(),
    };
    let z = stage2.encode_view(&image)?;
    let mut mesh = extract_mesh(&stage2, &z, cfg.infer_resolution(), cfg.infer_threshold())?;
    if cfg.infer.smooth_iterations > 0 {
        mesh = laplacian_smooth(&mesh, cfg.infer.smooth_iterations, SMOOTH_LAMBDA);
    }
    save_obj(&mesh, out_obj)?;
    let stem = out_obj.file_stem().unwrap_or_default().to_string_lossy();
    view.save(out_obj.with_file_name(format!("{stem}_view.s2m25d")))?;
    Ok(InferOutput { mesh, view })
}

/// Evaluate `pred` against `gt` with the named metric.
pub fn eval(
    cfg: &PipelineConfig,
    metric: &str,
    pred: &TriMesh,
    gt: &TriMesh,
    gt_points: Option<&PointCloud>,
) -> Result<EvalReport> {
    let registry = MetricRegistry::builtin();
    let m = registry.get(metric)?;
    m.evaluate(&EvalInput {
        pred,
        gt,
        gt_points,
        samples: cfg.eval.samples,
        seed: cfg.eval.seed,
        voxel_resolution: cfg.eval.voxel_resolution,
    })
}
