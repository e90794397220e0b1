//! Chamfer distances, voxel IoU and the named metric registry.

pub mod chamfer;
pub mod iou;
pub mod kdtree;
pub mod registry;

pub use chamfer::{chamfer_mesh, chamfer_point_cloud, chamfer_points, CHAMFER_FORMULA};
pub use iou::voxel_iou;
pub use kdtree::KdTree;
pub use registry::{EvalInput, EvalReport, Metric, MetricRegistry};
