//! Whole-pipeline configuration, read from TOML.
//!
//! ```toml
//! [data]
//! root = "data"
//! shapes = ["sphere", "box", "torus", "capsule"]
//!
//! [stage1]
//! image_size = 64
//! steps = 300
//!
//! [stage2]
//! decoder_layers = 5
//! resolutions = [16, 32]
//! steps = [300, 100]
//! ```
//!
//! Every section and key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::geometry::ShapeRegistry;
use crate::implicit::{ImplicitConfig, ENCODER_GRID};
use crate::metrics::MetricRegistry;
use crate::render::camera::{slanted_front_view, ViewCount};
use crate::render::SketchThresholds;
use crate::sketch25d::Sketch25DConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub root: PathBuf,
    pub shapes: Vec<String>,
    /// Half-width of the orthographic window around the cube center.
    pub half_extent: f64,
    pub voxel_resolutions: Vec<usize>,
    /// Size of the stored ground-truth point cloud per shape.
    pub point_samples: usize,
    pub seed: u64,
    pub sketch: SketchThresholds,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: PathBuf::from("data"),
            shapes: ["sphere", "box", "torus", "capsule"].map(String::from).to_vec(),
            half_extent: 0.8,
            voxel_resolutions: vec![16, 32],
            point_samples: 10_000,
            seed: 7,
            sketch: SketchThresholds::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferConfig {
    /// View fed to the single-view encoder; unset selects the slanted
    /// front view.
    pub view_index: Option<usize>,
    pub resolution: Option<usize>,
    pub threshold: Option<f64>,
    /// Laplacian smoothing passes on the extracted mesh; 0 disables.
    pub smooth_iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub metric: String,
    pub samples: usize,
    pub seed: u64,
    pub voxel_resolution: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metric: "chamfer_mesh".into(),
            samples: 10_000,
            seed: 0,
            voxel_resolution: 32,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub ckpt_25d: PathBuf,
    pub ckpt_3d: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            ckpt_25d: PathBuf::from("runs/stage1.ckpt"),
            ckpt_3d: PathBuf::from("runs/stage2.ckpt"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub data: DataConfig,
    pub stage1: Sketch25DConfig,
    pub stage2: ImplicitConfig,
    pub infer: InferConfig,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CoreError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            CoreError::Config(msg) => CoreError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::Config(msg));
        self.stage1.validate()?;
        self.stage2.validate()?;
        let d = &self.data;
        if d.shapes.is_empty() {
            return bad("data.shapes is empty".into());
        }
        let registry = ShapeRegistry::builtin();
        for s in &d.shapes {
            registry.create(s, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0))?;
        }
        if !(d.half_extent > 0.0 && d.half_extent.is_finite()) {
            return bad(format!("data.half_extent must be positive, got {}", d.half_extent));
        }
        if d.point_samples == 0 {
            return bad("data.point_samples must be positive".into());
        }
        let needed = std::iter::once(&ENCODER_GRID).chain(&self.stage2.resolutions);
        for n in needed {
            if !d.voxel_resolutions.contains(n) {
                return bad(format!("data.voxel_resolutions must include {n}"));
            }
        }
        let view = self.view_index();
        if view >= self.stage1.num_views {
            return bad(format!("infer.view_index {view} is out of range for {} views", self.stage1.num_views));
        }
        if self.infer.resolution.is_some_and(|n| n < 2) {
            return bad("infer.resolution must be >= 2".into());
        }
        if self.infer.threshold.is_some_and(|t| !(0.0..1.0).contains(&t)) {
            return bad("infer.threshold must be in [0, 1)".into());
        }
        MetricRegistry::builtin().get(&self.eval.metric)?;
        if self.eval.samples == 0 || self.eval.voxel_resolution < 2 {
            return bad("eval.samples must be positive and eval.voxel_resolution >= 2".into());
        }
        Ok(())
    }

    pub fn view_count(&self) -> ViewCount {
        ViewCount::from_count(self.stage1.num_views).expect("validated")
    }

    /// Configured view index, or the slanted front view.
    pub fn view_index(&self) -> usize {
        self.infer.view_index.unwrap_or_else(|| {
            ViewCount::from_count(self.stage1.num_views)
                .map(slanted_front_view)
                .unwrap_or(0)
        })
    }

    pub fn infer_resolution(&self) -> usize {
        self.infer
            .resolution
            .unwrap_or_else(|| *self.stage2.resolutions.last().expect("validated"))
    }

    pub fn infer_threshold(&self) -> f64 {
        self.infer.threshold.unwrap_or(0.5)
    }
}
