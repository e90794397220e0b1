use std::collections::HashMap;

use super::vec3::{add, cross, norm, scale, sub, Vec3};
use crate::error::{CoreError, Result};

/// Indexed triangle mesh with 0-based faces.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
}

/// Edge-sharing summary from [`watertight_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WatertightReport {
    pub is_watertight: bool,
    pub boundary_edge_count: usize,
    pub non_manifold_edge_count: usize,
}

impl TriMesh {
    /// Build a mesh, rejecting out-of-range indices and faces that repeat
    /// a vertex index.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(CoreError::InvalidMesh(format!(
                    "face {i} {f:?} indexes past {n} vertices"
                )));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(CoreError::InvalidMesh(format!("face {i} {f:?} is degenerate")));
            }
        }
        if self.vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(CoreError::InvalidMesh("non-finite vertex coordinate".into()));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn corners(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized normal `(b − a) × (c − a)`, length twice the area.
    pub fn face_cross(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.corners(face);
        cross(sub(b, a), sub(c, a))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * norm(self.face_cross(face))
    }

    pub fn area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Enclosed volume by the divergence theorem; positive when faces wind
    /// counter-clockwise seen from outside.
    pub fn signed_volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.corners(f);
                super::vec3::dot(a, cross(b, c)) / 6.0
            })
            .sum()
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        let mut lo = first;
        let mut hi = first;
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        Some((lo, hi))
    }

    pub fn transformed(&self, s: f64, t: Vec3) -> TriMesh {
        TriMesh {
            vertices: self.vertices.iter().map(|&v| add(scale(v, s), t)).collect(),
            faces: self.faces.clone(),
        }
    }

    /// Reverse the winding of every face.
    pub fn flip(&mut self) {
        for f in &mut self.faces {
            f.swap(1, 2);
        }
    }

    /// Append `other`, offsetting its indices.
    pub fn append(&mut self, other: &TriMesh) {
        let off = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.faces
            .extend(other.faces.iter().map(|f| [f[0] + off, f[1] + off, f[2] + off]));
    }
}

/// Scale and translate uniformly so the bounding box is centered at
/// `(0.5, 0.5, 0.5)` with its longest side 0.9.
pub fn normalize_mesh(mesh: &TriMesh) -> Result<TriMesh> {
    if mesh.faces.is_empty() {
        return Err(CoreError::EmptyMesh);
    }
    let (lo, hi) = mesh.bounds().ok_or(CoreError::EmptyMesh)?;
    let extent = (0..3).map(|a| hi[a] - lo[a]).fold(0.0, f64::max);
    if extent <= 0.0 {
        return Err(CoreError::ZeroArea);
    }
    let s = 0.9 / extent;
    let center = scale(add(lo, hi), 0.5);
    let vertices = mesh
        .vertices
        .iter()
        .map(|&v| {
            let d = sub(v, center);
            [d[0] * s + 0.5, d[1] * s + 0.5, d[2] * s + 0.5]
        })
        .collect();
    Ok(TriMesh {
        vertices,
        faces: mesh.faces.clone(),
    })
}

/// Count undirected edge usage; watertight iff every edge bounds exactly
/// two faces.
pub fn watertight_check(mesh: &TriMesh) -> WatertightReport {
    let mut counts: HashMap<(usize, usize), u32> = HashMap::new();
    for f in &mesh.faces {
        for i in 0..3 {
            let (a, b) = (f[i], f[(i + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    let boundary = counts.values().filter(|&&c| c == 1).count();
    let non_manifold = counts.values().filter(|&&c| c > 2).count();
    WatertightReport {
        is_watertight: boundary == 0 && non_manifold == 0,
        boundary_edge_count: boundary,
        non_manifold_edge_count: non_manifold,
    }
}

/// `k` rounds of umbrella smoothing with step `lambda`.
pub fn laplacian_smooth(mesh: &TriMesh, iterations: usize, lambda: f64) -> TriMesh {
    let n = mesh.vertices.len();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for f in &mesh.faces {
        for i in 0..3 {
            let (a, b) = (f[i], f[(i + 1) % 3]);
            neighbors[a].push(b);
            neighbors[b].push(a);
        }
    }
    for list in &mut neighbors {
        list.sort_unstable();
        list.dedup();
    }
    let mut verts = mesh.vertices.clone();
    for _ in 0..iterations {
        let prev = verts.clone();
        for (i, nb) in neighbors.iter().enumerate() {
            if nb.is_empty() {
                continue;
            }
            let mut avg = [0.0; 3];
            for &j in nb {
                avg = add(avg, prev[j]);
            }
            avg = scale(avg, 1.0 / nb.len() as f64);
            verts[i] = add(prev[i], scale(sub(avg, prev[i]), lambda));
        }
    }
    TriMesh {
        vertices: verts,
        faces: mesh.faces.clone(),
    }
}
