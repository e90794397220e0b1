use rayon::prelude::*;

use super::kdtree::KdTree;
use crate::error::{CoreError, Result};
use crate::geometry::mesh::TriMesh;
use crate::geometry::pointcloud::{sample_surface, PointCloud};
use crate::geometry::vec3::Vec3;

pub const CHAMFER_FORMULA: &str =
    "CD(A,B) = (1/|A|) sum_a min_b |a-b|^2 + (1/|B|) sum_b min_a |a-b|^2";

/// Mean over `queries` of the squared distance to the nearest point of
/// `tree`. Minima are found in parallel and summed in input order.
fn mean_nearest(queries: &[Vec3], tree: &KdTree) -> f64 {
    let mins: Vec<f64> = queries
        .par_iter()
        .map(|&q| tree.nearest_dist2(q).expect("tree is non-empty"))
        .collect();
    mins.iter().sum::<f64>() / queries.len() as f64
}

/// Symmetric squared-distance chamfer between two point sets.
pub fn chamfer_point_cloud(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    chamfer_points(&a.points, &b.points)
}

pub fn chamfer_points(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(CoreError::InvalidArgument("chamfer needs two non-empty point sets".into()));
    }
    let (ta, tb) = (KdTree::new(a), KdTree::new(b));
    Ok(mean_nearest(a, &tb) + mean_nearest(b, &ta))
}

/// Chamfer between `samples` area-weighted surface samples of each mesh,
/// both drawn with the same `seed`.
pub fn chamfer_mesh(pred: &TriMesh, gt: &TriMesh, samples: usize, seed: u64) -> Result<f64> {
    let a = sample_surface(pred, samples, seed)?;
    let b = sample_surface(gt, samples, seed)?;
    chamfer_point_cloud(&a, &b)
}
