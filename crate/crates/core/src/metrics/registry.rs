use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::chamfer::{chamfer_mesh, chamfer_point_cloud, CHAMFER_FORMULA};
use super::iou::voxel_iou;
use crate::error::{CoreError, Result};
use crate::geometry::mesh::TriMesh;
use crate::geometry::pointcloud::{sample_surface, PointCloud};
use crate::geometry::voxel::voxelize;
use crate::io;

/// Everything a metric may need about one prediction.
#[derive(Clone, Copy, Debug)]
pub struct EvalInput<'a> {
    pub pred: &'a TriMesh,
    pub gt: &'a TriMesh,
    /// Ground-truth cloud sampled once at dataset-build time, if available.
    pub gt_points: Option<&'a PointCloud>,
    pub samples: usize,
    pub seed: u64,
    pub voxel_resolution: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    pub samples: usize,
    pub seed: u64,
    pub units: String,
    pub formula: String,
}

impl EvalReport {
    /// `metric=<name> value=<float> samples=<int> seed=<int>`
    pub fn line(&self) -> String {
        format!(
            "metric={} value={} samples={} seed={}",
            self.metric, self.value, self.samples, self.seed
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = io::create(path)?;
        io::write_all(&mut w, path, self.to_json().as_bytes())?;
        io::write_all(&mut w, path, b"\n")?;
        io::flush(w, path)
    }
}

pub trait Metric: Send + Sync {
    fn name(&self) -> &'static str;
    fn evaluate(&self, input: &EvalInput) -> Result<EvalReport>;
}

const CHAMFER_UNITS: &str = "squared distance in normalized unit-cube coordinates";

/// Chamfer on fresh surface samples of both meshes.
pub struct MeshChamfer;

impl Metric for MeshChamfer {
    fn name(&self) -> &'static str {
        "chamfer_mesh"
    }

    fn evaluate(&self, input: &EvalInput) -> Result<EvalReport> {
        let value = chamfer_mesh(input.pred, input.gt, input.samples, input.seed)?;
        Ok(EvalReport {
            metric: self.name().into(),
            value,
            samples: input.samples,
            seed: input.seed,
            units: CHAMFER_UNITS.into(),
            formula: format!("{CHAMFER_FORMULA}, A and B area-weighted surface samples"),
        })
    }
}

/// Chamfer against the dataset's fixed ground-truth cloud. The prediction
/// is sampled to the same size; without a stored cloud the ground-truth
/// mesh is sampled with the same seed.
pub struct PointCloudChamfer;

impl Metric for PointCloudChamfer {
    fn name(&self) -> &'static str {
        "chamfer_pc"
    }

    fn evaluate(&self, input: &EvalInput) -> Result<EvalReport> {
        let gt = match input.gt_points {
            Some(c) => c.clone(),
            None => sample_surface(input.gt, input.samples, input.seed)?,
        };
        let pred = sample_surface(input.pred, gt.len().max(1), input.seed)?;
        let value = chamfer_point_cloud(&pred, &gt)?;
        Ok(EvalReport {
            metric: self.name().into(),
            value,
            samples: gt.len(),
            seed: input.seed,
            units: CHAMFER_UNITS.into(),
            formula: format!("{CHAMFER_FORMULA}, B the fixed ground-truth cloud"),
        })
    }
}

/// IoU of both meshes voxelized at `voxel_resolution`.
pub struct VoxelIou;

impl Metric for VoxelIou {
    fn name(&self) -> &'static str {
        "iou"
    }

    fn evaluate(&self, input: &EvalInput) -> Result<EvalReport> {
        let n = input.voxel_resolution;
        let value = voxel_iou(&voxelize(input.pred, n)?, &voxelize(input.gt, n)?)?;
        Ok(EvalReport {
            metric: self.name().into(),
            value,
            samples: n * n * n,
            seed: input.seed,
            units: "dimensionless".into(),
            formula: format!("IoU = |A and B| / |A or B| over {n}^3 voxel centers"),
        })
    }
}

/// Name → metric, selected at run time by the `eval` command.
pub struct MetricRegistry {
    metrics: BTreeMap<&'static str, Box<dyn Metric>>,
}

impl MetricRegistry {
    pub fn empty() -> Self {
        Self {
            metrics: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(MeshChamfer));
        reg.register(Box::new(PointCloudChamfer));
        reg.register(Box::new(VoxelIou));
        reg
    }

    pub fn register(&mut self, metric: Box<dyn Metric>) {
        self.metrics.insert(metric.name(), metric);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.metrics.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Metric> {
        self.metrics
            .get(name)
            .map(|m| m.as_ref())
            .ok_or_else(|| CoreError::Unknown {
                kind: "metric",
                name: name.to_string(),
                known: self.names().join(", "),
            })
    }
}
