//! On-disk dataset layout:
//!
//! ```text
//! <root>/manifest.txt            one shape id per line
//! <root>/<id>/mesh.obj           normalized ground-truth mesh
//! <root>/<id>/view_<v>.s2m25d    ground-truth maps per view
//! <root>/<id>/sketch_<v>.s2mskt  line-drawing proxy per view
//! <root>/<id>/voxels_<n>.s2mvox  occupancy at resolution n
//! <root>/<id>/points.xyz         fixed ground-truth surface samples
//! ```

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::error::{CoreError, Result};
use crate::geometry::{load_obj, PointCloud, TriMesh, VoxelGrid};
use crate::io;
use crate::render::{SketchImage, ViewMap25D};

pub const MANIFEST: &str = "manifest.txt";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    root: PathBuf,
    ids: Vec<String>,
}

pub fn view_file(v: usize) -> String {
    format!("view_{v}.s2m25d")
}

pub fn sketch_file(v: usize) -> String {
    format!("sketch_{v}.s2mskt")
}

pub fn voxel_file(n: usize) -> String {
    format!("voxels_{n}.s2mvox")
}

pub fn write_manifest(root: &Path, ids: &[String]) -> Result<()> {
    let path = root.join(MANIFEST);
    let mut w = io::create(&path)?;
    for id in ids {
        writeln!(w, "{id}").map_err(|e| CoreError::io(&path, e))?;
    }
    io::flush(w, &path)
}

impl Dataset {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let path = root.join(MANIFEST);
        let mut ids = Vec::new();
        for line in io::open(&path)?.lines() {
            let line = line.map_err(|e| CoreError::io(&path, e))?;
            let id = line.trim();
            if id.is_empty() || id.starts_with('#') {
                continue;
            }
            if !root.join(id).is_dir() {
                return Err(CoreError::Dataset(format!("{}: shape directory `{id}` is missing", path.display())));
            }
            ids.push(id.to_string());
        }
        if ids.is_empty() {
            return Err(CoreError::Dataset(format!("{}: no shape ids", path.display())));
        }
        Ok(Self { root, ids })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn shape_dir(&self, id: &str) -> PathBuf {
        self.root.join(id)
    }

    pub fn mesh(&self, id: &str) -> Result<TriMesh> {
        load_obj(self.shape_dir(id).join("mesh.obj"))
    }

    pub fn view(&self, id: &str, v: usize) -> Result<ViewMap25D> {
        ViewMap25D::load(self.shape_dir(id).join(view_file(v)))
    }

    pub fn views(&self, id: &str, count: usize) -> Result<Vec<ViewMap25D>> {
        (0..count).map(|v| self.view(id, v)).collect()
    }

    pub fn sketch(&self, id: &str, v: usize) -> Result<SketchImage> {
        SketchImage::load(self.shape_dir(id).join(sketch_file(v)))
    }

    pub fn voxels(&self, id: &str, n: usize) -> Result<VoxelGrid> {
        let grid = VoxelGrid::load(self.shape_dir(id).join(voxel_file(n)))?;
        if grid.resolution() != n {
            return Err(CoreError::ResolutionMismatch(grid.resolution(), n));
        }
        Ok(grid)
    }

    /// The stored ground-truth cloud, or `None` if the file is absent.
    pub fn points(&self, id: &str) -> Result<Option<PointCloud>> {
        let path = self.shape_dir(id).join("points.xyz");
        if !path.exists() {
            return Ok(None);
        }
        PointCloud::load_xyz(path).map(Some)
    }
}
