use crate::error::{CoreError, Result};
use crate::geometry::{Vec3, VoxelGrid};

/// Voxel-center points with occupancy labels and loss weights.
#[derive(Clone, Debug, PartialEq)]
pub struct PointValueSet {
    pub points: Vec<Vec3>,
    pub labels: Vec<f64>,
    pub weights: Vec<f64>,
    pub resolution: usize,
}

impl PointValueSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The entries at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            weights: indices.iter().map(|&i| self.weights[i]).collect(),
            resolution: self.resolution,
        }
    }
}

/// One point per voxel center, x fastest. Labels are 1 inside (or
/// outside, with `invert`); a voxel whose 6-neighborhood contains a
/// different label gets `surface_weight`, every other voxel 1. Neighbors
/// outside the grid are ignored.
pub fn sample_point_values(grid: &VoxelGrid, surface_weight: f64, invert: bool) -> Result<PointValueSet> {
    if !(surface_weight > 0.0 && surface_weight.is_finite()) {
        return Err(CoreError::InvalidArgument(format!(
            "surface weight must be positive, got {surface_weight}"
        )));
    }
    let n = grid.resolution();
    let mut points = Vec::with_capacity(n * n * n);
    let mut labels = Vec::with_capacity(n * n * n);
    let mut weights = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                let occ = grid.get(i, j, k);
                let differs = |a: Option<usize>, b: Option<usize>, c: Option<usize>| match (a, b, c) {
                    (Some(a), Some(b), Some(c)) if a < n && b < n && c < n => grid.get(a, b, c) != occ,
                    _ => false,
                };
                let boundary = differs(i.checked_sub(1), Some(j), Some(k))
                    || differs(Some(i + 1), Some(j), Some(k))
                    || differs(Some(i), j.checked_sub(1), Some(k))
                    || differs(Some(i), Some(j + 1), Some(k))
                    || differs(Some(i), Some(j), k.checked_sub(1))
                    || differs(Some(i), Some(j), Some(k + 1));
                points.push(grid.center(i, j, k));
                labels.push(if occ != invert { 1.0 } else { 0.0 });
                weights.push(if boundary { surface_weight } else { 1.0 });
            }
        }
    }
    Ok(PointValueSet {
        points,
        labels,
        weights,
        resolution: n,
    })
}
