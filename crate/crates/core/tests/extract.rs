use std::time::Instant;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s2m_core::extract::{marching_cubes, ScalarField};
use s2m_core::geometry::{watertight_check, TriMesh};

fn radial_errors(mesh: &TriMesh, r0: f64) -> f64 {
    mesh.vertices
        .iter()
        .map(|v| {
            let d = ((v[0] - 0.5).powi(2) + (v[1] - 0.5).powi(2) + (v[2] - 0.5).powi(2)).sqrt();
            (d - r0).abs()
        })
        .fold(0.0, f64::max)
}

fn dist(p: [f64; 3]) -> f64 {
    ((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2) + (p[2] - 0.5).powi(2)).sqrt()
}

#[test]
fn sphere_indicator_is_closed_outward_and_close() {
    let start = Instant::now();
    let field = ScalarField::from_fn(32, |p| if dist(p) < 0.3 { 1.0 } else { 0.0 }).unwrap();
    let mesh = marching_cubes(&field, 0.5);
    mesh.validate().unwrap();
    assert!(!mesh.is_empty());
    assert!(watertight_check(&mesh).is_watertight);
    assert!(mesh.signed_volume() > 0.0);
    assert!(radial_errors(&mesh, 0.3) <= 3f64.sqrt() / 32.0);
    // Binary fields cross at edge midpoints: every vertex has exactly one
    // coordinate on a half-integer multiple of the cell size.
    for v in &mesh.vertices {
        let on_mid = v.iter().filter(|c| ((*c * 32.0).fract() - 0.0).abs() < 1e-9).count();
        assert_eq!(on_mid, 1, "{v:?}");
    }
    assert!(start.elapsed().as_secs_f64() < 10.0);
}

#[test]
fn smooth_sphere_field_is_within_half_a_cell() {
    let r0 = 0.3;
    let field = ScalarField::from_fn(32, |p| 0.5 + (r0 - dist(p))).unwrap();
    let mesh = marching_cubes(&field, 0.5);
    assert!(watertight_check(&mesh).is_watertight);
    assert!(mesh.signed_volume() > 0.0);
    let err = radial_errors(&mesh, r0);
    assert!(err <= 0.5 / 32.0, "radial error {err}");
    let exact = 4.0 / 3.0 * std::f64::consts::PI * r0.powi(3);
    assert!((mesh.signed_volume() - exact).abs() / exact < 0.02);
}

#[test]
fn constant_field_gives_empty_mesh() {
    let field = ScalarField::new(8, vec![0.0; 512]).unwrap();
    assert!(marching_cubes(&field, 0.5).is_empty());
}

#[test]
fn full_field_closes_against_the_padding() {
    let field = ScalarField::new(4, vec![1.0; 64]).unwrap();
    let mesh = marching_cubes(&field, 0.5);
    assert!(watertight_check(&mesh).is_watertight);
    // Crossings against the padding sit at the domain faces, with the cube's
    // edges and corners cut off.
    let (lo, hi) = mesh.bounds().unwrap();
    for a in 0..3 {
        assert!(lo[a].abs() < 1e-12 && (hi[a] - 1.0).abs() < 1e-12);
    }
    let v = mesh.signed_volume();
    assert!(v > 0.8 && v < 1.0, "volume {v}");
}

#[test]
fn linear_fields_interpolate_exactly() {
    let n = 10;
    let (a, b, c, d) = (0.3, -0.7, 0.45, 0.6);
    let field = ScalarField::from_fn(n, |p| a * p[0] + b * p[1] + c * p[2] + d).unwrap();
    let threshold = 0.5;
    let mesh = marching_cubes(&field, threshold);
    let lo = 0.5 / n as f64;
    let hi = 1.0 - lo;
    let mut checked = 0;
    for v in &mesh.vertices {
        // Skip crossings against the padding layer, where the field is not linear.
        if v.iter().all(|&x| x >= lo - 1e-12 && x <= hi + 1e-12) {
            let f = a * v[0] + b * v[1] + c * v[2] + d;
            assert!((f - threshold).abs() <= 1e-12, "residual {}", f - threshold);
            checked += 1;
        }
    }
    assert!(checked > 50);
}

#[test]
fn extraction_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let values: Vec<f64> = (0..12 * 12 * 12).map(|_| rng.gen()).collect();
    let field = ScalarField::new(12, values).unwrap();
    assert_eq!(marching_cubes(&field, 0.5), marching_cubes(&field, 0.5));
}

#[test]
fn every_single_cell_configuration_is_closed() {
    // A 2×2×2 field is one interior cell, with padding all around.
    for config in 0..256u32 {
        let values: Vec<f64> = (0..8).map(|c| if config >> c & 1 == 1 { 1.0 } else { 0.0 }).collect();
        let mesh = marching_cubes(&ScalarField::new(2, values).unwrap(), 0.5);
        assert_eq!(mesh.is_empty(), config == 0);
        let report = watertight_check(&mesh);
        assert!(report.is_watertight, "config {config}: {report:?}");
        if config != 0 {
            assert!(mesh.signed_volume() > 0.0, "config {config}");
        }
    }
}

#[test]
fn finer_grids_have_more_vertices() {
    let f = |p: [f64; 3]| 0.5 + (0.3 - dist(p));
    let coarse = marching_cubes(&ScalarField::from_fn(16, f).unwrap(), 0.5);
    let fine = marching_cubes(&ScalarField::from_fn(32, f).unwrap(), 0.5);
    assert!(fine.vertices.len() >= coarse.vertices.len());
}

#[test]
fn field_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let field = ScalarField::from_fn(6, |p| p[0] * 0.25 + p[2]).unwrap();
    let path = dir.path().join("f.s2mfld");
    field.save(&path).unwrap();
    let back = ScalarField::load(&path).unwrap();
    for (a, b) in field.values().iter().zip(back.values()) {
        assert!((a - b).abs() < 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_fields_give_closed_outward_surfaces(n in 2usize..7, seed in 0u64..10_000, binary in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..n * n * n)
            .map(|_| if binary { f64::from(rng.gen_bool(0.5) as u8) } else { rng.gen() })
            .collect();
        let mesh = marching_cubes(&ScalarField::new(n, values).unwrap(), 0.5);
        prop_assert!(mesh.validate().is_ok());
        prop_assert!(watertight_check(&mesh).is_watertight);
        if !mesh.is_empty() {
            prop_assert!(mesh.signed_volume() > 0.0);
        }
    }
}
