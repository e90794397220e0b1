//! Meshes, voxel grids, point clouds and the analytic shapes behind the
//! synthetic data.

pub mod mesh;
pub mod obj;
pub mod pointcloud;
pub mod shapes;
pub mod vec3;
pub mod voxel;

pub use mesh::{laplacian_smooth, normalize_mesh, watertight_check, TriMesh, WatertightReport};
pub use obj::{load_obj, parse_obj, save_obj};
pub use pointcloud::{sample_surface, PointCloud};
pub use shapes::{Capsule, Cuboid, RayHit, Shape, ShapeRegistry, Sphere, Torus};
pub use vec3::Vec3;
pub use voxel::{voxel_center, voxelize, VoxelGrid};
