//! Analytic primitives usable both as exact inside predicates and as
//! tessellated meshes, plus a by-name registry for dataset generation.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt::Debug;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::mesh::TriMesh;
use super::vec3::{add, dot, normalize, scale, sub, Vec3};
use crate::error::{CoreError, Result};

/// Ray hit: parameter along the ray and unit outward normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    pub t: f64,
    pub normal: Vec3,
}

pub trait Shape: Debug + Send + Sync {
    fn name(&self) -> &'static str;
    /// Strict interior test.
    fn contains(&self, p: Vec3) -> bool;
    /// Euclidean signed distance, negative inside.
    fn signed_distance(&self, p: Vec3) -> f64;
    /// Closed, outward-wound tessellation.
    fn mesh(&self) -> TriMesh;
    /// First intersection with `t > 0` along `origin + t·dir` (`dir` unit).
    fn raycast(&self, origin: Vec3, dir: Vec3) -> Option<RayHit>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sphere {
    pub center: Vec3,
    pub radius: f64,
    /// Icosphere subdivision level of the mesh.
    pub level: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cuboid {
    pub center: Vec3,
    pub half: Vec3,
}

/// Torus around the z axis through `center`.
#[derive(Clone, Debug, PartialEq)]
pub struct Torus {
    pub center: Vec3,
    pub major: f64,
    pub minor: f64,
    pub segments: [usize; 2],
}

/// Capsule whose axis segment runs along z from `center − h` to `center + h`.
#[derive(Clone, Debug, PartialEq)]
pub struct Capsule {
    pub center: Vec3,
    pub half_length: f64,
    pub radius: f64,
    pub segments: usize,
}

fn ray_sphere(origin: Vec3, dir: Vec3, c: Vec3, r: f64) -> Option<(f64, f64)> {
    let oc = sub(origin, c);
    let b = dot(oc, dir);
    let disc = b * b - (dot(oc, oc) - r * r);
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    Some((-b - s, -b + s))
}

/// Flip all faces when the enclosed volume comes out negative.
fn orient_outward(mut mesh: TriMesh) -> TriMesh {
    if mesh.signed_volume() < 0.0 {
        mesh.flip();
    }
    mesh
}

impl Sphere {
    pub fn new(center: Vec3, radius: f64) -> Self {
        Self {
            center,
            radius,
            level: 4,
        }
    }
}

/// Unit icosphere with a vertex at each pole.
pub fn unit_icosphere(level: usize) -> TriMesh {
    let z = 1.0 / 5f64.sqrt();
    let rr = 2.0 / 5f64.sqrt();
    let mut verts = vec![[0.0, 0.0, 1.0]];
    for i in 0..5 {
        let a = 2.0 * PI * i as f64 / 5.0;
        verts.push([rr * a.cos(), rr * a.sin(), z]);
    }
    for i in 0..5 {
        let a = 2.0 * PI * (i as f64 + 0.5) / 5.0;
        verts.push([rr * a.cos(), rr * a.sin(), -z]);
    }
    verts.push([0.0, 0.0, -1.0]);
    let mut faces = Vec::new();
    for i in 0..5 {
        let (u0, u1) = (1 + i, 1 + (i + 1) % 5);
        let (l0, l1) = (6 + i, 6 + (i + 1) % 5);
        faces.push([0, u0, u1]);
        faces.push([u0, l0, u1]);
        faces.push([u1, l0, l1]);
        faces.push([11, l1, l0]);
    }
    let mut mesh = TriMesh {
        vertices: verts,
        faces,
    };
    for _ in 0..level {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut faces = Vec::with_capacity(mesh.faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<Vec3>| {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(normalize(scale(add(verts[a], verts[b]), 0.5)));
                verts.len() - 1
            })
        };
        for &[a, b, c] in &mesh.faces {
            let ab = midpoint(a, b, &mut mesh.vertices);
            let bc = midpoint(b, c, &mut mesh.vertices);
            let ca = midpoint(c, a, &mut mesh.vertices);
            faces.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        mesh.faces = faces;
    }
    orient_outward(mesh)
}

impl Shape for Sphere {
    fn name(&self) -> &'static str {
        "sphere"
    }

    fn contains(&self, p: Vec3) -> bool {
        super::vec3::dist2(p, self.center) < self.radius * self.radius
    }

    fn signed_distance(&self, p: Vec3) -> f64 {
        super::vec3::norm(sub(p, self.center)) - self.radius
    }

    fn mesh(&self) -> TriMesh {
        unit_icosphere(self.level).transformed(self.radius, self.center)
    }

    fn raycast(&self, origin: Vec3, dir: Vec3) -> Option<RayHit> {
        let (t0, t1) = ray_sphere(origin, dir, self.center, self.radius)?;
        let t = if t0 > 0.0 { t0 } else if t1 > 0.0 { t1 } else { return None };
        let p = add(origin, scale(dir, t));
        Some(RayHit {
            t,
            normal: normalize(sub(p, self.center)),
        })
    }
}

impl Shape for Cuboid {
    fn name(&self) -> &'static str {
        "box"
    }

    fn contains(&self, p: Vec3) -> bool {
        (0..3).all(|a| (p[a] - self.center[a]).abs() < self.half[a])
    }

    fn signed_distance(&self, p: Vec3) -> f64 {
        let q: Vec3 = std::array::from_fn(|a| (p[a] - self.center[a]).abs() - self.half[a]);
        let outside = super::vec3::norm([q[0].max(0.0), q[1].max(0.0), q[2].max(0.0)]);
        outside + q[0].max(q[1]).max(q[2]).min(0.0)
    }

    fn mesh(&self) -> TriMesh {
        let (c, h) = (self.center, self.half);
        let vertices = (0..8)
            .map(|i| {
                let s = |bit: usize| if i >> bit & 1 == 1 { 1.0 } else { -1.0 };
                [c[0] + s(0) * h[0], c[1] + s(1) * h[1], c[2] + s(2) * h[2]]
            })
            .collect();
        // Each quad is listed counter-clockwise from outside.
        let quads = [
            [0, 2, 3, 1],
            [4, 5, 7, 6],
            [0, 1, 5, 4],
            [2, 6, 7, 3],
            [0, 4, 6, 2],
            [1, 3, 7, 5],
        ];
        let faces = quads
            .iter()
            .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
            .collect();
        orient_outward(TriMesh { vertices, faces })
    }

    fn raycast(&self, origin: Vec3, dir: Vec3) -> Option<RayHit> {
        let (mut tmin, mut tmax) = (f64::NEG_INFINITY, f64::INFINITY);
        let (mut nmin, mut nmax) = ([0.0; 3], [0.0; 3]);
        for a in 0..3 {
            let lo = self.center[a] - self.half[a];
            let hi = self.center[a] + self.half[a];
            if dir[a] == 0.0 {
                if origin[a] <= lo || origin[a] >= hi {
                    return None;
                }
                continue;
            }
            let (mut t0, mut t1) = ((lo - origin[a]) / dir[a], (hi - origin[a]) / dir[a]);
            let mut n0 = [0.0; 3];
            n0[a] = -1.0;
            let mut n1 = [0.0; 3];
            n1[a] = 1.0;
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
                std::mem::swap(&mut n0, &mut n1);
            }
            if t0 > tmin {
                tmin = t0;
                nmin = n0;
            }
            if t1 < tmax {
                tmax = t1;
                nmax = n1;
            }
        }
        if tmin > tmax || tmax <= 0.0 {
            return None;
        }
        if tmin > 0.0 {
            Some(RayHit { t: tmin, normal: nmin })
        } else {
            Some(RayHit { t: tmax, normal: nmax })
        }
    }
}

impl Torus {
    fn local(&self, p: Vec3) -> Vec3 {
        sub(p, self.center)
    }

    fn implicit(&self, p: Vec3) -> f64 {
        let q = self.local(p);
        let ring = (q[0] * q[0] + q[1] * q[1]).sqrt() - self.major;
        ring * ring + q[2] * q[2] - self.minor * self.minor
    }

    fn normal_at(&self, p: Vec3) -> Vec3 {
        let q = self.local(p);
        let rho = (q[0] * q[0] + q[1] * q[1]).sqrt().max(1e-300);
        let k = 1.0 - self.major / rho;
        normalize([q[0] * k, q[1] * k, q[2]])
    }
}

impl Shape for Torus {
    fn name(&self) -> &'static str {
        "torus"
    }

    fn contains(&self, p: Vec3) -> bool {
        self.implicit(p) < 0.0
    }

    fn signed_distance(&self, p: Vec3) -> f64 {
        let q = self.local(p);
        let ring = (q[0] * q[0] + q[1] * q[1]).sqrt() - self.major;
        (ring * ring + q[2] * q[2]).sqrt() - self.minor
    }

    fn mesh(&self) -> TriMesh {
        let [nu, nv] = self.segments;
        let mut vertices = Vec::with_capacity(nu * nv);
        for i in 0..nu {
            let u = 2.0 * PI * i as f64 / nu as f64;
            for j in 0..nv {
                let v = 2.0 * PI * j as f64 / nv as f64;
                let rho = self.major + self.minor * v.cos();
                vertices.push(add(self.center, [rho * u.cos(), rho * u.sin(), self.minor * v.sin()]));
            }
        }
        let id = |i: usize, j: usize| (i % nu) * nv + (j % nv);
        let mut faces = Vec::with_capacity(2 * nu * nv);
        for i in 0..nu {
            for j in 0..nv {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                faces.push([a, b, c]);
                faces.push([a, c, d]);
            }
        }
        orient_outward(TriMesh { vertices, faces })
    }

    fn raycast(&self, origin: Vec3, dir: Vec3) -> Option<RayHit> {
        let (t0, t1) = ray_sphere(origin, dir, self.center, self.major + self.minor)?;
        let start = t0.max(0.0);
        if t1 <= start {
            return None;
        }
        // March at a step well below the tube radius, then bisect the first
        // outside-to-inside sign change.
        let step = self.minor / 64.0;
        let at = |t: f64| self.implicit(add(origin, scale(dir, t)));
        let mut a = start;
        let mut fa = at(a);
        while a < t1 {
            let b = (a + step).min(t1);
            let fb = at(b);
            if fa > 0.0 && fb <= 0.0 {
                let (mut lo, mut hi) = (a, b);
                for _ in 0..80 {
                    let m = 0.5 * (lo + hi);
                    if at(m) > 0.0 {
                        lo = m;
                    } else {
                        hi = m;
                    }
                }
                let t = 0.5 * (lo + hi);
                let normal = self.normal_at(add(origin, scale(dir, t)));
                return Some(RayHit { t, normal });
            }
            a = b;
            fa = fb;
        }
        None
    }
}

impl Capsule {
    fn axis_point(&self, p: Vec3) -> Vec3 {
        let z = (p[2] - self.center[2]).clamp(-self.half_length, self.half_length);
        [self.center[0], self.center[1], self.center[2] + z]
    }
}

impl Shape for Capsule {
    fn name(&self) -> &'static str {
        "capsule"
    }

    fn contains(&self, p: Vec3) -> bool {
        super::vec3::dist2(p, self.axis_point(p)) < self.radius * self.radius
    }

    fn signed_distance(&self, p: Vec3) -> f64 {
        super::vec3::norm(sub(p, self.axis_point(p))) - self.radius
    }

    fn mesh(&self) -> TriMesh {
        let n = self.segments.max(3);
        let cap_rings = (n / 4).max(1);
        let (c, h, r) = (self.center, self.half_length, self.radius);
        // Rings from top to bottom as (z, ring radius).
        let mut rings = Vec::new();
        for k in 1..=cap_rings {
            let th = 0.5 * PI * k as f64 / cap_rings as f64;
            rings.push((h + r * th.cos(), r * th.sin()));
        }
        for k in 0..cap_rings {
            let th = 0.5 * PI + 0.5 * PI * k as f64 / cap_rings as f64;
            rings.push((-h + r * th.cos(), r * th.sin()));
        }
        let mut vertices = vec![add(c, [0.0, 0.0, h + r])];
        for &(z, rho) in &rings {
            for m in 0..n {
                let phi = 2.0 * PI * m as f64 / n as f64;
                vertices.push(add(c, [rho * phi.cos(), rho * phi.sin(), z]));
            }
        }
        let bottom = vertices.len();
        vertices.push(add(c, [0.0, 0.0, -h - r]));
        let id = |k: usize, m: usize| 1 + k * n + m % n;
        let mut faces = Vec::new();
        for m in 0..n {
            faces.push([0, id(0, m), id(0, m + 1)]);
        }
        for k in 0..rings.len() - 1 {
            for m in 0..n {
                let (a, b, cc, d) = (id(k, m), id(k + 1, m), id(k + 1, m + 1), id(k, m + 1));
                faces.push([a, b, cc]);
                faces.push([a, cc, d]);
            }
        }
        let last = rings.len() - 1;
        for m in 0..n {
            faces.push([bottom, id(last, m + 1), id(last, m)]);
        }
        orient_outward(TriMesh { vertices, faces })
    }

    fn raycast(&self, origin: Vec3, dir: Vec3) -> Option<RayHit> {
        let mut best: Option<RayHit> = None;
        let mut consider = |t: f64, normal: Vec3| {
            if t > 0.0 && best.map_or(true, |b| t < b.t) {
                best = Some(RayHit { t, normal });
            }
        };
        let o = sub(origin, self.center);
        // Side wall.
        let a = dir[0] * dir[0] + dir[1] * dir[1];
        if a > 0.0 {
            let b = o[0] * dir[0] + o[1] * dir[1];
            let cc = o[0] * o[0] + o[1] * o[1] - self.radius * self.radius;
            let disc = b * b - a * cc;
            if disc >= 0.0 {
                for t in [(-b - disc.sqrt()) / a, (-b + disc.sqrt()) / a] {
                    let z = o[2] + t * dir[2];
                    if z.abs() <= self.half_length {
                        let p = add(o, scale(dir, t));
                        consider(t, normalize([p[0], p[1], 0.0]));
                    }
                }
            }
        }
        for sign in [1.0, -1.0] {
            let cap = add(self.center, [0.0, 0.0, sign * self.half_length]);
            if let Some((t0, t1)) = ray_sphere(origin, dir, cap, self.radius) {
                for t in [t0, t1] {
                    let p = add(origin, scale(dir, t));
                    if sign * (p[2] - cap[2]) >= 0.0 {
                        consider(t, normalize(sub(p, cap)));
                    }
                }
            }
        }
        best
    }
}

type ShapeCtor = fn(&mut ChaCha8Rng) -> Box<dyn Shape>;

/// Name → randomized constructor for synthetic datasets. All builtins
/// are centered at `(0.5, 0.5, 0.5)`.
pub struct ShapeRegistry {
    ctors: BTreeMap<&'static str, ShapeCtor>,
}

const CENTER: Vec3 = [0.5, 0.5, 0.5];

impl ShapeRegistry {
    pub fn empty() -> Self {
        Self {
            ctors: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("sphere", |rng| Box::new(Sphere::new(CENTER, rng.gen_range(0.3..0.45))));
        reg.register("box", |rng| {
            Box::new(Cuboid {
                center: CENTER,
                half: std::array::from_fn(|_| rng.gen_range(0.15..0.4)),
            })
        });
        reg.register("torus", |rng| {
            Box::new(Torus {
                center: CENTER,
                major: rng.gen_range(0.25..0.32),
                minor: rng.gen_range(0.09..0.14),
                segments: [64, 32],
            })
        });
        reg.register("capsule", |rng| {
            Box::new(Capsule {
                center: CENTER,
                half_length: rng.gen_range(0.1..0.25),
                radius: rng.gen_range(0.12..0.2),
                segments: 48,
            })
        });
        reg
    }

    pub fn register(&mut self, name: &'static str, ctor: ShapeCtor) {
        self.ctors.insert(name, ctor);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.ctors.keys().copied().collect()
    }

    pub fn create(&self, name: &str, rng: &mut ChaCha8Rng) -> Result<Box<dyn Shape>> {
        let ctor = self.ctors.get(name).ok_or_else(|| CoreError::Unknown {
            kind: "shape",
            name: name.to_string(),
            known: self.names().join(", "),
        })?;
        Ok(ctor(rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::watertight_check;

    #[test]
    fn builtin_meshes_are_closed_and_outward() {
        let reg = ShapeRegistry::builtin();
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        for name in reg.names() {
            let shape = reg.create(name, &mut rng).unwrap();
            let mesh = shape.mesh();
            mesh.validate().unwrap();
            assert!(watertight_check(&mesh).is_watertight, "{name}");
            assert!(mesh.signed_volume() > 0.0, "{name}");
        }
    }

    #[test]
    fn icosphere_vertices_on_unit_sphere() {
        let m = unit_icosphere(2);
        assert_eq!(m.faces.len(), 20 * 16);
        for v in &m.vertices {
            assert!((super::super::vec3::norm(*v) - 1.0).abs() < 1e-12);
        }
        assert!(m.vertices.contains(&[0.0, 0.0, 1.0]));
    }

    #[test]
    fn unknown_shape_lists_known_names() {
        let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let err = ShapeRegistry::builtin().create("cone", &mut rng).unwrap_err();
        assert!(err.to_string().contains("sphere"));
    }
}
