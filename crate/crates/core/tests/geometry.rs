use proptest::prelude::*;
use s2m_core::geometry::shapes::unit_icosphere;
use s2m_core::geometry::{
    load_obj, normalize_mesh, parse_obj, sample_surface, save_obj, voxelize, watertight_check, Capsule, Cuboid,
    Shape, Sphere, Torus, TriMesh, VoxelGrid,
};
use s2m_core::CoreError;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn cube(lo: f64, hi: f64) -> TriMesh {
    let h = 0.5 * (hi - lo);
    let c = 0.5 * (hi + lo);
    Cuboid {
        center: [c; 3],
        half: [h; 3],
    }
    .mesh()
}

fn close(a: &TriMesh, b: &TriMesh, tol: f64) -> bool {
    a.faces == b.faces
        && a.vertices
            .iter()
            .zip(&b.vertices)
            .all(|(p, q)| (0..3).all(|i| (p[i] - q[i]).abs() <= tol))
}

#[test]
fn normalize_unit_cube() {
    let m = normalize_mesh(&cube(-0.5, 0.5)).unwrap();
    let (lo, hi) = m.bounds().unwrap();
    for a in 0..3 {
        assert!((lo[a] - 0.05).abs() < 1e-12);
        assert!((hi[a] - 0.95).abs() < 1e-12);
    }
}

#[test]
fn normalize_is_idempotent() {
    let m = normalize_mesh(&cube(-2.0, 3.0)).unwrap();
    let again = normalize_mesh(&m).unwrap();
    assert!(close(&m, &again, 1e-12));
}

#[test]
fn normalize_keeps_aspect() {
    let b = Cuboid {
        center: [1.0, -2.0, 0.0],
        half: [1.0, 0.5, 0.5],
    }
    .mesh();
    let m = normalize_mesh(&b).unwrap();
    let (lo, hi) = m.bounds().unwrap();
    let ext: Vec<f64> = (0..3).map(|a| hi[a] - lo[a]).collect();
    assert!((ext[0] - 0.9).abs() < 1e-12);
    assert!((ext[1] - 0.45).abs() < 1e-12);
    assert!((ext[2] - 0.45).abs() < 1e-12);
}

proptest! {
    #[test]
    fn normalize_ignores_similarity(s in 0.01f64..100.0, tx in -10.0f64..10.0, ty in -10.0f64..10.0, tz in -10.0f64..10.0) {
        let base = Torus { center: [0.1, 0.2, 0.3], major: 0.3, minor: 0.1, segments: [12, 8] }.mesh();
        let a = normalize_mesh(&base).unwrap();
        let b = normalize_mesh(&base.transformed(s, [tx, ty, tz])).unwrap();
        prop_assert!(close(&a, &b, 1e-9));
    }

    #[test]
    fn voxelization_is_monotone(lo in 0.05f64..0.45, hi in 0.55f64..0.95, shrink in 0.0f64..0.04, n in 4usize..20) {
        let outer = voxelize(&cube(lo, hi), n).unwrap();
        let inner = voxelize(&cube(lo + shrink, hi - shrink), n).unwrap();
        for (a, b) in inner.occupancy().iter().zip(outer.occupancy()) {
            prop_assert!(!*a || *b);
        }
    }
}

#[test]
fn box_voxelization_counts_512() {
    let grid = voxelize(&cube(0.25, 0.75), 16).unwrap();
    assert_eq!(grid.count(), 512);
    let oracle = VoxelGrid::from_predicate(16, |p| p.iter().all(|&c| c > 0.25 && c < 0.75));
    assert_eq!(grid, oracle);
    for k in 0..16 {
        for j in 0..16 {
            for i in 0..16 {
                let expect = [i, j, k].iter().all(|v| (4..=11).contains(v));
                assert_eq!(grid.get(i, j, k), expect);
            }
        }
    }
}

/// Largest deviation of the tessellation from the true surface, measured
/// on dense surface samples and on vertices.
fn tessellation_gap(shape: &dyn Shape) -> f64 {
    let mesh = shape.mesh();
    let cloud = sample_surface(&mesh, 200_000, 9).unwrap();
    cloud
        .points
        .iter()
        .chain(&mesh.vertices)
        .map(|&p| shape.signed_distance(p).abs())
        .fold(0.0, f64::max)
}

fn assert_matches_predicate(shape: &dyn Shape, n: usize) {
    let gap = tessellation_gap(shape);
    let oracle = VoxelGrid::from_predicate(n, |p| shape.contains(p));
    let closest = (0..n * n * n)
        .map(|idx| {
            let (i, j, k) = (idx % n, idx / n % n, idx / (n * n));
            shape.signed_distance(oracle.center(i, j, k)).abs()
        })
        .fold(f64::MAX, f64::min);
    // The oracle only applies when no center falls between mesh and surface.
    assert!(closest > 2.0 * gap, "{}: center gap {closest} vs tessellation {gap}", shape.name());
    let grid = voxelize(&shape.mesh(), n).unwrap();
    assert_eq!(grid.count(), oracle.count(), "{} n={n}", shape.name());
    assert_eq!(grid, oracle);
}

#[test]
fn sphere_voxelization_matches_predicate() {
    let s = Sphere::new([0.5; 3], 0.45);
    assert_matches_predicate(&s, 16);
    let brute = (0..4096)
        .filter(|idx| {
            let c = [idx % 16, idx / 16 % 16, idx / 256].map(|v| (v as f64 + 0.5) / 16.0);
            c.iter().map(|x| (x - 0.5) * (x - 0.5)).sum::<f64>() < 0.45 * 0.45
        })
        .count();
    assert_eq!(voxelize(&s.mesh(), 16).unwrap().count(), brute);
}

#[test]
fn torus_and_capsule_voxelization_match_predicates() {
    let torus = Torus {
        center: [0.5; 3],
        major: 0.3,
        minor: 0.12,
        segments: [128, 64],
    };
    assert_matches_predicate(&torus, 16);
    let capsule = Capsule {
        center: [0.5; 3],
        half_length: 0.2,
        radius: 0.17,
        segments: 96,
    };
    assert_matches_predicate(&capsule, 16);
    let sphere = Sphere::new([0.5; 3], 0.3025);
    assert_matches_predicate(&sphere, 32);
}

#[test]
fn nested_spheres_nest_voxels() {
    let small = voxelize(&Sphere::new([0.5; 3], 0.3).mesh(), 24).unwrap();
    let big = voxelize(&Sphere::new([0.5; 3], 0.4).mesh(), 24).unwrap();
    assert!(small.count() < big.count());
    for (a, b) in small.occupancy().iter().zip(big.occupancy()) {
        assert!(!*a || *b);
    }
}

#[test]
fn empty_region_is_all_false() {
    let g = voxelize(&cube(0.01, 0.02), 16).unwrap();
    assert_eq!(g.count(), 0);
}

#[test]
fn open_mesh_is_rejected() {
    let mut m = cube(0.2, 0.8);
    m.faces.pop();
    match voxelize(&m, 8) {
        Err(CoreError::NotWatertight { boundary, .. }) => assert_eq!(boundary, 3),
        other => panic!("expected watertight error, got {other:?}"),
    }
}

#[test]
fn closed_box_is_watertight() {
    let r = watertight_check(&cube(0.0, 1.0));
    assert!(r.is_watertight);
    assert_eq!(r.boundary_edge_count, 0);
}

#[test]
fn single_triangle_samples_stay_in_hull() {
    let tri = TriMesh::new(vec![[0.1, 0.2, 0.3], [0.9, 0.2, 0.3], [0.1, 0.7, 0.3]], vec![[0, 1, 2]]).unwrap();
    let cloud = sample_surface(&tri, 2000, 1).unwrap();
    for p in &cloud.points {
        assert!((p[2] - 0.3).abs() < 1e-12);
        // Barycentric coordinates of the right triangle.
        let u = (p[0] - 0.1) / 0.8;
        let v = (p[1] - 0.2) / 0.5;
        assert!(u >= -1e-12 && v >= -1e-12 && u + v <= 1.0 + 1e-12);
    }
    for n in cloud.normals.as_ref().unwrap() {
        assert!((n[2].abs() - 1.0).abs() < 1e-12);
    }
}

fn two_triangles() -> TriMesh {
    // Areas 1.5 and 0.5.
    TriMesh::new(
        vec![[0.0, 0.0, 0.0], [3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 5.0], [1.0, 0.0, 5.0], [0.0, 1.0, 5.0]],
        vec![[0, 1, 2], [3, 4, 5]],
    )
    .unwrap()
}

#[test]
fn area_weighting_three_to_one() {
    let cloud = sample_surface(&two_triangles(), 10_000, 4).unwrap();
    let low = cloud.points.iter().filter(|p| p[2] < 1.0).count() as f64;
    let high = 10_000.0 - low;
    let ratio = low / high;
    assert!((ratio - 3.0).abs() <= 0.15, "ratio {ratio}");
}

#[test]
fn per_face_counts_pass_chi_square() {
    let mesh = normalize_mesh(&Sphere { center: [0.0; 3], radius: 1.0, level: 1 }.mesh()).unwrap();
    // Skew the areas so the test is not trivially uniform.
    let mut mesh = mesh;
    for v in &mut mesh.vertices {
        v[0] = 0.5 + (v[0] - 0.5) * 3.0;
    }
    let cloud = sample_surface(&mesh, 10_000, 77).unwrap();
    let nf = mesh.faces.len();
    let areas: Vec<f64> = (0..nf).map(|f| mesh.face_area(f)).collect();
    let total: f64 = areas.iter().sum();
    let mut counts = vec![0usize; nf];
    for p in &cloud.points {
        // Attribute each sample to the face whose plane it lies in.
        let f = (0..nf)
            .min_by(|&a, &b| plane_dist(&mesh, a, *p).total_cmp(&plane_dist(&mesh, b, *p)))
            .unwrap();
        counts[f] += 1;
    }
    let stat: f64 = counts
        .iter()
        .zip(&areas)
        .map(|(&c, &a)| {
            let e = 10_000.0 * a / total;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new((nf - 1) as f64).unwrap().inverse_cdf(0.99);
    assert!(stat < critical, "chi-square {stat} >= {critical}");
}

fn plane_dist(mesh: &TriMesh, f: usize, p: [f64; 3]) -> f64 {
    let [a, b, c] = mesh.corners(f);
    let n = mesh.face_cross(f);
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    let plane = ((p[0] - a[0]) * n[0] + (p[1] - a[1]) * n[1] + (p[2] - a[2]) * n[2]).abs() / len;
    // Penalize points outside the face's bounding box to separate coplanar faces.
    let out: f64 = (0..3)
        .map(|i| {
            let lo = a[i].min(b[i]).min(c[i]) - 1e-9;
            let hi = a[i].max(b[i]).max(c[i]) + 1e-9;
            if p[i] < lo || p[i] > hi { 1.0 } else { 0.0 }
        })
        .sum();
    plane + out
}

#[test]
fn sampling_is_seed_deterministic() {
    let m = unit_icosphere(2);
    assert_eq!(sample_surface(&m, 500, 3).unwrap(), sample_surface(&m, 500, 3).unwrap());
    assert_ne!(sample_surface(&m, 500, 3).unwrap(), sample_surface(&m, 500, 4).unwrap());
}

#[test]
fn zero_area_mesh_cannot_be_sampled() {
    let m = TriMesh::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]], vec![[0, 1, 2]]).unwrap();
    assert!(matches!(sample_surface(&m, 10, 0), Err(CoreError::ZeroArea)));
}

#[test]
fn obj_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.obj");
    let mesh = Torus { center: [0.5; 3], major: 0.3, minor: 0.1, segments: [10, 6] }.mesh();
    save_obj(&mesh, &path).unwrap();
    let back = load_obj(&path).unwrap();
    assert!(close(&mesh, &back, 1e-6));
}

#[test]
fn obj_quad_is_fan_triangulated() {
    let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n", "quad").unwrap();
    assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
    let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nf 1/1/1 2//2 -1\n", "slashes").unwrap();
    assert_eq!(m.faces, vec![[0, 1, 2]]);
}

#[test]
fn obj_errors_carry_line_numbers() {
    let e = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\n# c\nf 1 2 7\n", "bad.obj").unwrap_err();
    match e {
        CoreError::Parse { line, .. } => assert_eq!(line, 5),
        other => panic!("{other:?}"),
    }
    let e = parse_obj("v 0 zero 0\n", "bad.obj").unwrap_err();
    assert!(e.to_string().starts_with("bad.obj:1:"));
}
