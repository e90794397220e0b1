use std::path::Path;

use super::mesh::{watertight_check, TriMesh};
use super::vec3::Vec3;
use crate::error::{CoreError, Result};
use crate::io;

pub const VOXEL_MAGIC: &[u8] = b"S2MVOX1";

/// Binary occupancy over `[0,1]³`, x fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoxelGrid {
    n: usize,
    occ: Vec<bool>,
}

/// Center of voxel `i` along one axis at resolution `n`.
#[inline]
pub fn voxel_center(i: usize, n: usize) -> f64 {
    (i as f64 + 0.5) / n as f64
}

impl VoxelGrid {
    pub fn empty(n: usize) -> Self {
        assert!(n > 0, "voxel resolution must be positive");
        Self {
            n,
            occ: vec![false; n * n * n],
        }
    }

    pub fn from_occupancy(n: usize, occ: Vec<bool>) -> Result<Self> {
        if n == 0 || occ.len() != n * n * n {
            return Err(CoreError::InvalidArgument(format!(
                "occupancy of length {} does not match resolution {n}",
                occ.len()
            )));
        }
        Ok(Self { n, occ })
    }

    /// Occupancy of every voxel center under `inside`.
    pub fn from_predicate(n: usize, inside: impl Fn(Vec3) -> bool) -> Self {
        let mut grid = Self::empty(n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let idx = grid.index(i, j, k);
                    grid.occ[idx] = inside(grid.center(i, j, k));
                }
            }
        }
        grid
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.n * (j + self.n * k)
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        [voxel_center(i, self.n), voxel_center(j, self.n), voxel_center(k, self.n)]
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.occ[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: bool) {
        let idx = self.index(i, j, k);
        self.occ[idx] = v;
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occ
    }

    pub fn count(&self) -> usize {
        self.occ.iter().filter(|&&b| b).count()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = io::create(path)?;
        io::write_all(&mut w, path, VOXEL_MAGIC)?;
        io::write_all(&mut w, path, &(self.n as u32).to_le_bytes())?;
        let mut bytes = vec![0u8; self.occ.len().div_ceil(8)];
        for (i, &b) in self.occ.iter().enumerate() {
            if b {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        io::write_all(&mut w, path, &bytes)?;
        io::flush(w, path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = io::open(path)?;
        io::expect_magic(&mut r, path, VOXEL_MAGIC)?;
        let n = io::read_u32(&mut r, path)? as usize;
        if n == 0 || n > 4096 {
            return Err(CoreError::format(path, format!("implausible resolution {n}")));
        }
        let total = n * n * n;
        let mut bytes = vec![0u8; total.div_ceil(8)];
        std::io::Read::read_exact(&mut r, &mut bytes)
            .map_err(|_| CoreError::format(path, "truncated occupancy bits"))?;
        io::expect_eof(&mut r, path)?;
        let occ = (0..total).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(Self { n, occ })
    }
}

/// Sign of the 2-D orientation of `q` against edge `(a, b)` in the
/// (y, z) plane, under the symbolic perturbation `q + (ε, ε²)`.
///
/// The edge is evaluated with endpoints in vertex-index order and the
/// result negated if needed, so two faces sharing an edge always see
/// exactly opposite values. Returns the unperturbed determinant as well.
fn edge_sign(a: [f64; 2], ia: usize, b: [f64; 2], ib: usize, q: [f64; 2]) -> (i8, f64) {
    let (p, r, neg) = if ia < ib { (a, b, false) } else { (b, a, true) };
    let d = (r[0] - p[0]) * (q[1] - p[1]) - (r[1] - p[1]) * (q[0] - p[0]);
    let s = if d != 0.0 {
        d.signum()
    } else if r[1] != p[1] {
        -(r[1] - p[1]).signum()
    } else {
        (r[0] - p[0]).signum()
    };
    let s = if s > 0.0 { 1 } else if s < 0.0 { -1 } else { 0 };
    if neg {
        (-s, -d)
    } else {
        (s, d)
    }
}

/// Occupancy of voxel centers by ray parity along +x.
///
/// Each (j, k) row casts one ray; its crossings with the mesh are found
/// with exact-sign tests and symbolic tie-breaking, so rays through
/// vertices or edges are counted consistently.
pub fn voxelize(mesh: &TriMesh, n: usize) -> Result<VoxelGrid> {
    if n == 0 {
        return Err(CoreError::InvalidArgument("resolution must be positive".into()));
    }
    mesh.validate()?;
    let report = watertight_check(mesh);
    if !report.is_watertight {
        return Err(CoreError::NotWatertight {
            boundary: report.boundary_edge_count,
            non_manifold: report.non_manifold_edge_count,
        });
    }
    let nf = n as f64;
    // Bucket faces by the rows their (y, z) bounding box covers.
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n * n];
    let row_range = |lo: f64, hi: f64| {
        let first = (lo * nf - 0.5).ceil().max(0.0);
        let last = (hi * nf - 0.5).floor().min(nf - 1.0);
        (first as usize, last)
    };
    for (fi, f) in mesh.faces.iter().enumerate() {
        let ys = f.map(|v| mesh.vertices[v][1]);
        let zs = f.map(|v| mesh.vertices[v][2]);
        let (j0, j1) = row_range(ys.iter().copied().fold(f64::MAX, f64::min), ys.iter().copied().fold(f64::MIN, f64::max));
        let (k0, k1) = row_range(zs.iter().copied().fold(f64::MAX, f64::min), zs.iter().copied().fold(f64::MIN, f64::max));
        if j1 < 0.0 || k1 < 0.0 {
            continue;
        }
        for k in k0..=k1 as usize {
            for j in j0..=j1 as usize {
                rows[j + n * k].push(fi);
            }
        }
    }
    let mut grid = VoxelGrid::empty(n);
    let mut hits = Vec::new();
    for k in 0..n {
        for j in 0..n {
            let q = [voxel_center(j, n), voxel_center(k, n)];
            hits.clear();
            for &fi in &rows[j + n * k] {
                let f = mesh.faces[fi];
                let v = f.map(|i| mesh.vertices[i]);
                let p = v.map(|x| [x[1], x[2]]);
                let (s0, d0) = edge_sign(p[1], f[1], p[2], f[2], q);
                let (s1, d1) = edge_sign(p[2], f[2], p[0], f[0], q);
                let (s2, d2) = edge_sign(p[0], f[0], p[1], f[1], q);
                if s0 == 0 || s0 != s1 || s1 != s2 {
                    continue;
                }
                let w = d0 + d1 + d2;
                if w == 0.0 {
                    continue;
                }
                hits.push((d0 * v[0][0] + d1 * v[1][0] + d2 * v[2][0]) / w);
            }
            if hits.is_empty() {
                continue;
            }
            hits.sort_by(f64::total_cmp);
            // Parity of crossings strictly beyond each center.
            let mut h = 0;
            for i in 0..n {
                let x = voxel_center(i, n);
                while h < hits.len() && hits[h] <= x {
                    h += 1;
                }
                if (hits.len() - h) % 2 == 1 {
                    grid.set(i, j, k, true);
                }
            }
        }
    }
    Ok(grid)
}
