use std::collections::HashMap;

use super::field::ScalarField;
use super::table::{case_table, EDGES};
use crate::geometry::TriMesh;

/// Value used for the padding layer around the grid: strictly outside.
pub fn padding_value(threshold: f64) -> f64 {
    if threshold > 0.0 {
        0.0
    } else {
        threshold - 1.0
    }
}

/// Iso-surface of `field` at `threshold`, with `value > threshold` inside.
///
/// The grid is padded with one layer of outside values so the result is
/// closed even where the shape touches the domain boundary. Vertices are
/// linear interpolations along cell edges, shared between cells by edge,
/// and faces wind counter-clockwise seen from outside. Loops that cannot
/// be fanned from one of their own vertices get an extra centroid vertex.
pub fn marching_cubes(field: &ScalarField, threshold: f64) -> TriMesh {
    let n = field.resolution();
    let np = n + 2;
    let pad = padding_value(threshold);
    let value = |i: usize, j: usize, k: usize| {
        if i == 0 || j == 0 || k == 0 || i > n || j > n || k > n {
            pad
        } else {
            field.get(i - 1, j - 1, k - 1)
        }
    };
    let coord = |i: usize| (i as f64 - 0.5) / n as f64;
    let table = case_table();
    let mut mesh = TriMesh::default();
    let mut vertex_of: HashMap<usize, usize> = HashMap::new();
    for k in 0..np - 1 {
        for j in 0..np - 1 {
            for i in 0..np - 1 {
                let corner = |c: usize| (i + (c & 1), j + (c >> 1 & 1), k + (c >> 2 & 1));
                let mut config = 0;
                for c in 0..8 {
                    let (x, y, z) = corner(c);
                    if value(x, y, z) > threshold {
                        config |= 1 << c;
                    }
                }
                let case = &table[config];
                if case.is_empty() {
                    continue;
                }
                for poly in case {
                    let mut ids = Vec::with_capacity(poly.edges.len() + 1);
                    for &e in &poly.edges {
                        let (ca, cb) = EDGES[e];
                        let (a, b) = (corner(ca), corner(cb));
                        let axis = match cb - ca {
                            1 => 0,
                            2 => 1,
                            _ => 2,
                        };
                        let key = ((a.2 * np + a.1) * np + a.0) * 3 + axis;
                        ids.push(*vertex_of.entry(key).or_insert_with(|| {
                            let (va, vb) = (value(a.0, a.1, a.2), value(b.0, b.1, b.2));
                            let t = (threshold - va) / (vb - va);
                            let mut p = [coord(a.0), coord(a.1), coord(a.2)];
                            let (lo, hi) = ([a.0, a.1, a.2][axis], [b.0, b.1, b.2][axis]);
                            p[axis] = coord(lo) + t * (coord(hi) - coord(lo));
                            mesh.vertices.push(p);
                            mesh.vertices.len() - 1
                        }));
                    }
                    if poly.apex.is_none() {
                        let k = ids.len() as f64;
                        let mut c = [0.0; 3];
                        for &v in &ids {
                            for (ax, x) in c.iter_mut().enumerate() {
                                *x += mesh.vertices[v][ax] / k;
                            }
                        }
                        mesh.vertices.push(c);
                        ids.push(mesh.vertices.len() - 1);
                    }
                    for t in poly.triangles() {
                        mesh.faces.push(t.map(|i| ids[i]));
                    }
                }
            }
        }
    }
    mesh
}
