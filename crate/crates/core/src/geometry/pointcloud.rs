use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mesh::TriMesh;
use super::vec3::{add, normalize, scale, Vec3};
use crate::error::{CoreError, Result};
use crate::io;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self {
            points,
            normals: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Plain-text `x y z` per line.
    pub fn save_xyz(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = io::create(path)?;
        for p in &self.points {
            writeln!(w, "{:.9} {:.9} {:.9}", p[0], p[1], p[2]).map_err(|e| CoreError::io(path, e))?;
        }
        io::flush(w, path)
    }

    pub fn load_xyz(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let r = io::open(path)?;
        let mut points = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line.map_err(|e| CoreError::io(path, e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| CoreError::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: format!("bad coordinate: {e}"),
                })?;
            if vals.len() != 3 {
                return Err(CoreError::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    msg: format!("expected 3 coordinates, found {}", vals.len()),
                });
            }
            points.push([vals[0], vals[1], vals[2]]);
        }
        Ok(Self::new(points))
    }
}

/// `count` points distributed by area over the faces and uniformly inside
/// each face, with the sampled face's unit normal.
pub fn sample_surface(mesh: &TriMesh, count: usize, seed: u64) -> Result<PointCloud> {
    if count == 0 {
        return Err(CoreError::InvalidArgument("sample count must be at least 1".into()));
    }
    if mesh.faces.is_empty() {
        return Err(CoreError::EmptyMesh);
    }
    let mut cdf = Vec::with_capacity(mesh.faces.len());
    let mut total = 0.0;
    for f in 0..mesh.faces.len() {
        total += mesh.face_area(f);
        cdf.push(total);
    }
    if !(total > 0.0) {
        return Err(CoreError::ZeroArea);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(count);
    let mut normals = Vec::with_capacity(count);
    for _ in 0..count {
        let u: f64 = rng.gen_range(0.0..total);
        let f = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        let [a, b, c] = mesh.corners(f);
        let s = rng.gen::<f64>().sqrt();
        let t: f64 = rng.gen();
        let p = add(add(scale(a, 1.0 - s), scale(b, s * (1.0 - t))), scale(c, s * t));
        points.push(p);
        normals.push(normalize(mesh.face_cross(f)));
    }
    Ok(PointCloud {
        points,
        normals: Some(normals),
    })
}
