use crate::error::{CoreError, Result};
use crate::geometry::voxel::VoxelGrid;

/// `|a ∧ b| / |a ∨ b|`, defined as 1 when both grids are empty.
pub fn voxel_iou(a: &VoxelGrid, b: &VoxelGrid) -> Result<f64> {
    if a.resolution() != b.resolution() {
        return Err(CoreError::ResolutionMismatch(a.resolution(), b.resolution()));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.occupancy().iter().zip(b.occupancy()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
