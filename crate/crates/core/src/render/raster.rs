use rayon::prelude::*;

use super::camera::Viewpoint;
use super::maps::ViewMap25D;
use crate::geometry::vec3::{add, dot, normalize, scale, Vec3};
use crate::geometry::{Shape, TriMesh};

/// Nearest surface point seen through one pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelHit {
    /// Signed distance of the hit from the view center toward the camera.
    pub along: f64,
    /// Unit world-space normal facing the camera.
    pub normal: Vec3,
}

/// Anything that can report first hits for the orthographic pixel rays
/// of a view, in row-major pixel order.
pub trait Surface {
    fn cast_view(&self, vp: &Viewpoint) -> Vec<Option<PixelHit>>;
}

/// Distance from the view center at which analytic rays start.
const RAY_START: f64 = 4.0;

impl Surface for TriMesh {
    /// Z-buffered rasterization at pixel centers, equivalent to casting one
    /// ray per pixel. Pixels on a shared edge are covered by both faces.
    fn cast_view(&self, vp: &Viewpoint) -> Vec<Option<PixelHit>> {
        let size = vp.image_size;
        let mut out: Vec<Option<PixelHit>> = vec![None; size * size];
        let proj: Vec<(f64, f64, f64)> = self.vertices.iter().map(|&v| vp.project(v)).collect();
        let ext = vp.ortho_half_extent;
        let n = size as f64;
        let to_col = |s: f64| (s / ext + 1.0) * 0.5 * n - 0.5;
        let to_row = |t: f64| (1.0 - t / ext) * 0.5 * n - 0.5;
        for (fi, f) in self.faces.iter().enumerate() {
            let p = f.map(|i| proj[i]);
            let area = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[1].1 - p[0].1) * (p[2].0 - p[0].0);
            if area == 0.0 {
                continue;
            }
            let cols = p.map(|q| to_col(q.0));
            let rows = p.map(|q| to_row(q.1));
            let c0 = cols.iter().copied().fold(f64::MAX, f64::min).ceil().max(0.0);
            let c1 = cols.iter().copied().fold(f64::MIN, f64::max).floor().min(n - 1.0);
            let r0 = rows.iter().copied().fold(f64::MAX, f64::min).ceil().max(0.0);
            let r1 = rows.iter().copied().fold(f64::MIN, f64::max).floor().min(n - 1.0);
            if c1 < c0 || r1 < r0 {
                continue;
            }
            let mut normal = normalize(self.face_cross(fi));
            if dot(normal, vp.eye) < 0.0 {
                normal = scale(normal, -1.0);
            }
            for row in r0 as usize..=r1 as usize {
                for col in c0 as usize..=c1 as usize {
                    let (s, t) = vp.pixel_plane(col, row);
                    let edge = |a: (f64, f64, f64), b: (f64, f64, f64)| {
                        (b.0 - a.0) * (t - a.1) - (b.1 - a.1) * (s - a.0)
                    };
                    let w0 = edge(p[1], p[2]);
                    let w1 = edge(p[2], p[0]);
                    let w2 = edge(p[0], p[1]);
                    let inside = (w0 >= 0.0 && w1 >= 0.0 && w2 >= 0.0) || (w0 <= 0.0 && w1 <= 0.0 && w2 <= 0.0);
                    if !inside {
                        continue;
                    }
                    let along = (w0 * p[0].2 + w1 * p[1].2 + w2 * p[2].2) / (w0 + w1 + w2);
                    let slot = &mut out[row * size + col];
                    if slot.map_or(true, |h| along > h.along) {
                        *slot = Some(PixelHit { along, normal });
                    }
                }
            }
        }
        out
    }
}

/// Adapter rendering an analytic shape by exact per-pixel ray casts.
pub struct Analytic<'a>(pub &'a dyn Shape);

impl Surface for Analytic<'_> {
    fn cast_view(&self, vp: &Viewpoint) -> Vec<Option<PixelHit>> {
        let size = vp.image_size;
        let dir = scale(vp.eye, -1.0);
        (0..size * size)
            .into_par_iter()
            .map(|i| {
                let (s, t) = vp.pixel_plane(i % size, i / size);
                let origin = add(
                    add(vp.center, add(scale(vp.right, s), scale(vp.up, t))),
                    scale(vp.eye, RAY_START),
                );
                self.0.raycast(origin, dir).map(|h| {
                    let mut normal = h.normal;
                    if dot(normal, vp.eye) < 0.0 {
                        normal = scale(normal, -1.0);
                    }
                    PixelHit {
                        along: RAY_START - h.t,
                        normal,
                    }
                })
            })
            .collect()
    }
}

/// Depth, camera-frame normal and mask of the nearest surface per pixel.
pub fn render_view25d<S: Surface + ?Sized>(surface: &S, vp: &Viewpoint) -> ViewMap25D {
    let size = vp.image_size;
    let hits = surface.cast_view(vp);
    let mut map = ViewMap25D::background(size);
    for (i, hit) in hits.into_iter().enumerate() {
        if let Some(h) = hit {
            let n = vp.to_camera(h.normal);
            map.set_pixel(i % size, i / size, [vp.depth_of(h.along), n[0], n[1], n[2], 1.0]);
        }
    }
    map
}
