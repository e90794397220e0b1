use serde::{Deserialize, Serialize};

use crate::geometry::vec3::{cross, dot, normalize, scale, sub, Vec3};

/// Number of icosahedron-based views.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewCount {
    /// The 12 icosahedron vertices.
    Twelve,
    /// The 12 vertices plus the two poles `(0, 0, ±1)`.
    Fourteen,
}

impl ViewCount {
    pub fn from_count(n: usize) -> Option<Self> {
        match n {
            12 => Some(Self::Twelve),
            14 => Some(Self::Fourteen),
            _ => None,
        }
    }

    pub fn count(self) -> usize {
        match self {
            Self::Twelve => 12,
            Self::Fourteen => 14,
        }
    }
}

/// Orthographic camera looking at `center` from direction `eye`.
#[derive(Clone, Debug, PartialEq)]
pub struct Viewpoint {
    pub eye: Vec3,
    pub up: Vec3,
    pub right: Vec3,
    pub center: Vec3,
    pub ortho_half_extent: f64,
    pub image_size: usize,
}

pub const DEFAULT_HALF_EXTENT: f64 = 0.5;
pub const OBJECT_CENTER: Vec3 = [0.5, 0.5, 0.5];

impl Viewpoint {
    /// Camera frame for `eye`: up is world +z made orthogonal to the eye,
    /// or world +y when the eye is (anti)parallel to z.
    pub fn new(eye: Vec3, image_size: usize, ortho_half_extent: f64) -> Self {
        let eye = normalize(eye);
        let world_up = if eye[0].abs() < 1e-9 && eye[1].abs() < 1e-9 {
            [0.0, 1.0, 0.0]
        } else {
            [0.0, 0.0, 1.0]
        };
        let up = normalize(sub(world_up, scale(eye, dot(world_up, eye))));
        let right = cross(up, eye);
        Self {
            eye,
            up,
            right,
            center: OBJECT_CENTER,
            ortho_half_extent,
            image_size,
        }
    }

    /// Image-plane coordinates `(s, t)` of the center of pixel
    /// (`col`, `row`); row 0 is the top of the image.
    pub fn pixel_plane(&self, col: usize, row: usize) -> (f64, f64) {
        let n = self.image_size as f64;
        let s = ((col as f64 + 0.5) / n * 2.0 - 1.0) * self.ortho_half_extent;
        let t = (1.0 - (row as f64 + 0.5) / n * 2.0) * self.ortho_half_extent;
        (s, t)
    }

    /// World point → `(s, t, along)` where `along` is the signed distance
    /// from the center toward the camera.
    pub fn project(&self, p: Vec3) -> (f64, f64, f64) {
        let d = sub(p, self.center);
        (dot(d, self.right), dot(d, self.up), dot(d, self.eye))
    }

    /// Normalized depth: the near end of the slab maps to −1, the far end
    /// to +1, clamped to that range.
    pub fn depth_of(&self, along: f64) -> f64 {
        (-along / self.ortho_half_extent).clamp(-1.0, 1.0)
    }

    /// Inverse of [`Viewpoint::depth_of`] on the slab.
    pub fn along_of(&self, depth: f64) -> f64 {
        -depth * self.ortho_half_extent
    }

    /// World point seen at pixel (`col`, `row`) with normalized depth.
    pub fn unproject(&self, col: usize, row: usize, depth: f64) -> Vec3 {
        let (s, t) = self.pixel_plane(col, row);
        let a = self.along_of(depth);
        let mut p = self.center;
        for i in 0..3 {
            p[i] += s * self.right[i] + t * self.up[i] + a * self.eye[i];
        }
        p
    }

    /// World vector → camera-frame components (right, up, eye).
    pub fn to_camera(&self, v: Vec3) -> Vec3 {
        [dot(v, self.right), dot(v, self.up), dot(v, self.eye)]
    }
}

/// The 12 icosahedron vertex directions in a fixed order.
pub fn icosahedron_directions() -> Vec<Vec3> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [0.0, 1.0, phi],
        [0.0, 1.0, -phi],
        [0.0, -1.0, phi],
        [0.0, -1.0, -phi],
        [1.0, phi, 0.0],
        [1.0, -phi, 0.0],
        [-1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [phi, 0.0, 1.0],
        [phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
    ];
    raw.iter().map(|&v| normalize(v)).collect()
}

pub fn view_directions(count: ViewCount) -> Vec<Vec3> {
    let mut dirs = icosahedron_directions();
    if count == ViewCount::Fourteen {
        dirs.push([0.0, 0.0, 1.0]);
        dirs.push([0.0, 0.0, -1.0]);
    }
    dirs
}

pub fn icosahedron_viewpoints(count: ViewCount, image_size: usize, ortho_half_extent: f64) -> Vec<Viewpoint> {
    view_directions(count)
        .into_iter()
        .map(|e| Viewpoint::new(e, image_size, ortho_half_extent))
        .collect()
}

/// Index of the view closest to a camera raised 30° above the front
/// (−y) direction.
pub fn slanted_front_view(count: ViewCount) -> usize {
    let target = [0.0, -(30f64.to_radians().cos()), 30f64.to_radians().sin()];
    let dirs = view_directions(count);
    (0..dirs.len())
        .max_by(|&a, &b| dot(dirs[a], target).total_cmp(&dot(dirs[b], target)))
        .unwrap_or(0)
}
