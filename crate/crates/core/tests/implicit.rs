use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s2m_core::geometry::{voxel_center, Sphere, Shape, VoxelGrid};
use s2m_core::implicit::*;
use s2m_nn::{Graph, Tensor};

fn small_config() -> ImplicitConfig {
    ImplicitConfig {
        latent_dim: 8,
        hidden: vec![64, 64, 32, 16],
        encoder_channels: vec![4, 8],
        view_channels: vec![4, 8],
        resolutions: vec![8],
        steps: vec![400],
        lr: 3e-3,
        ..ImplicitConfig::default()
    }
}

fn random_grid(rng: &mut ChaCha8Rng, n: usize) -> VoxelGrid {
    VoxelGrid::from_occupancy(n, (0..n * n * n).map(|_| rng.gen_bool(0.4)).collect()).unwrap()
}

/// Brute-force boundary test by explicit neighbor offsets.
fn oracle_boundary(grid: &VoxelGrid, i: usize, j: usize, k: usize) -> bool {
    let n = grid.resolution() as i64;
    let here = grid.get(i, j, k);
    let offsets = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)];
    offsets.iter().any(|&(di, dj, dk)| {
        let (a, b, c) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
        (0..n).contains(&a) && (0..n).contains(&b) && (0..n).contains(&c) && grid.get(a as usize, b as usize, c as usize) != here
    })
}

#[test]
fn sampling_covers_every_voxel_center() {
    for n in [16, 32] {
        let grid = VoxelGrid::from_predicate(n, |p| Sphere::new([0.5; 3], 0.3).contains(p));
        let pvs = sample_point_values(&grid, 4.0, false).unwrap();
        assert_eq!(pvs.len(), n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let p = pvs.points[grid.index(i, j, k)];
                    assert_eq!(p, [voxel_center(i, n), voxel_center(j, n), voxel_center(k, n)]);
                }
            }
        }
    }
}

#[test]
fn boundary_weights_match_neighbor_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for t in 0..20 {
        let n = [16, 32][t % 2];
        let grid = random_grid(&mut rng, n);
        let pvs = sample_point_values(&grid, 4.0, false).unwrap();
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let idx = grid.index(i, j, k);
                    let expected = if oracle_boundary(&grid, i, j, k) { 4.0 } else { 1.0 };
                    assert_eq!(pvs.weights[idx], expected);
                    assert_eq!(pvs.labels[idx], if grid.get(i, j, k) { 1.0 } else { 0.0 });
                }
            }
        }
    }
}

#[test]
fn empty_grid_and_inverted_labels() {
    let pvs = sample_point_values(&VoxelGrid::empty(4), 4.0, false).unwrap();
    assert!(pvs.labels.iter().all(|&l| l == 0.0));
    assert!(pvs.weights.iter().all(|&w| w == 1.0));
    let inv = sample_point_values(&VoxelGrid::empty(4), 4.0, true).unwrap();
    assert!(inv.labels.iter().all(|&l| l == 1.0));
    assert!(sample_point_values(&VoxelGrid::empty(4), 0.0, false).is_err());
}

/// Hand-computed loss cases; predictions are fed in directly so only the
/// reduction is exercised.
#[test]
fn weighted_loss_hand_examples() {
    let loss = |pred: Vec<f64>, labels: Vec<f64>, weights: Vec<f64>| {
        let n = pred.len();
        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![n, 1], pred).unwrap()).unwrap();
        let l = g
            .weighted_mse(x, Tensor::new(vec![n, 1], labels).unwrap(), Tensor::new(vec![n, 1], weights).unwrap())
            .unwrap();
        g.value(l).item()
    };
    assert!((loss(vec![0.2, 0.6], vec![0.0, 1.0], vec![1.0, 3.0]) - 0.13).abs() < 1e-12);
    assert_eq!(loss(vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 4.0]), 0.0);
    assert!((loss(vec![0.5; 3], vec![0.0, 1.0, 1.0], vec![1.0, 4.0, 2.5]) - 0.25).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weighted_loss_is_scale_invariant_and_bounded(
        seed in any::<u64>(), n in 1usize..40, c in 0.01f64..100.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pred: Vec<f64> = (0..n).map(|_| rng.gen_range(0.001..0.999)).collect();
        let labels: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..5.0)).collect();
        let run = |w: Vec<f64>| {
            let mut g = Graph::new();
            let x = g.input(Tensor::new(vec![n, 1], pred.clone()).unwrap()).unwrap();
            let l = g.weighted_mse(x, Tensor::new(vec![n, 1], labels.clone()).unwrap(), Tensor::new(vec![n, 1], w).unwrap()).unwrap();
            g.value(l).item()
        };
        let base = run(w.clone());
        // Powers of two scale every term exactly.
        let exact = run(w.iter().map(|v| v * 4.0).collect());
        prop_assert_eq!(base.to_bits(), exact.to_bits());
        let scaled = run(w.iter().map(|v| v * c).collect());
        prop_assert!((base - scaled).abs() <= 1e-12 * base.max(1e-300) + 1e-15);
        prop_assert!((0.0..1.0).contains(&base));
    }
}

#[test]
fn decoder_output_is_in_unit_interval_and_batch_independent() {
    let model = ImplicitModel::new(ImplicitConfig::default(), 64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z: Vec<f64> = (0..128).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let pts: Vec<[f64; 3]> = (0..1000).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    let batch = model.implicit_forward(&z, &pts).unwrap();
    for (p, b) in pts.iter().zip(&batch) {
        assert!(*b > 0.0 && *b < 1.0);
        let single = model.implicit_forward(&z, &[*p]).unwrap();
        assert_eq!(single[0].to_bits(), b.to_bits());
    }
}

#[test]
fn untrained_grid_is_finite_and_deterministic() {
    let model = ImplicitModel::new(small_config(), 16).unwrap();
    let z = vec![0.3; 8];
    let a = evaluate_grid(&model, &z, 20).unwrap();
    assert_eq!(a.values().len(), 8000);
    assert!(a.values().iter().all(|v| v.is_finite() && *v > 0.0 && *v < 1.0));
    let b = evaluate_grid(&model, &z, 20).unwrap();
    assert_eq!(a, b);
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = single.install(|| evaluate_grid(&model, &z, 20).unwrap());
    assert_eq!(a, c);
    assert!(evaluate_grid(&model, &z, 1).is_err());
}

#[test]
fn decoder_widths_and_parameter_counts() {
    let five = ImplicitConfig::default();
    assert_eq!(five.decoder_widths(), vec![131, 512, 512, 256, 128, 1]);
    let six = ImplicitConfig { decoder_layers: 6, ..five.clone() };
    assert_eq!(six.decoder_widths(), vec![131, 512, 512, 512, 256, 128, 1]);
    let count = |w: &[usize]| w.windows(2).map(|p| p[0] * p[1] + p[1]).sum::<usize>();
    let m5 = ImplicitModel::new(five.clone(), 64).unwrap();
    let m6 = ImplicitModel::new(six, 64).unwrap();
    assert_eq!(m5.decoder_param_count(), count(&five.decoder_widths()));
    assert_eq!(m6.decoder_param_count(), m5.decoder_param_count() + 512 * 512 + 512);
    assert!(ImplicitModel::new(ImplicitConfig { decoder_layers: 7, ..five }, 64).is_err());
}

#[test]
fn view_encoder_emits_latent_sized_codes() {
    let model = ImplicitModel::new(ImplicitConfig::default(), 64).unwrap();
    let z = model.encode_view(&vec![0.1; 5 * 64 * 64]).unwrap();
    assert_eq!(z.len(), 128);
}

fn two_shapes() -> Vec<ShapeData> {
    [0.3, 0.42]
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            let sphere = Sphere::new([0.5, 0.5, 0.45 + 0.05 * i as f64], r);
            let g16 = VoxelGrid::from_predicate(16, |p| sphere.contains(p));
            let g8 = VoxelGrid::from_predicate(8, |p| sphere.contains(p));
            ShapeData {
                id: format!("s{i}"),
                encoder_grid: g16,
                point_sets: vec![sample_point_values(&g8, 4.0, false).unwrap()],
            }
        })
        .collect()
}

#[test]
fn pretraining_learns_distinct_latents_and_supports_auto_decoding() {
    let shapes = two_shapes();
    let mut model = ImplicitModel::new(small_config(), 16).unwrap();
    let trace = pretrain_autoencoder(&mut model, &shapes, |_, _| Ok(())).unwrap();
    assert_eq!(trace.rows.len(), 400);
    assert!(trace.rows.last().unwrap().loss < 0.5 * trace.rows[0].loss);
    let (z0, z1) = (model.latent("s0").unwrap(), model.latent("s1").unwrap());
    let dist: f64 = z0.iter().zip(&z1).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    assert!(dist > 1e-3, "latent distance {dist}");

    for s in &shapes {
        let grid8 = {
            let pvs = &s.point_sets[0];
            VoxelGrid::from_occupancy(8, pvs.labels.iter().map(|&l| l > 0.5).collect()).unwrap()
        };
        let field = evaluate_grid(&model, &model.latent(&s.id).unwrap(), 8).unwrap();
        let iou = field_iou(&field, &grid8, 0.5).unwrap();
        assert!(iou >= 0.9, "{} iou {iou} loss {}", s.id, trace.rows.last().unwrap().loss);

        let before = model.ae.clone();
        let (z, _) = auto_decode(&model, &s.point_sets[0], 200, 3e-2).unwrap();
        assert_eq!(model.ae, before);
        let field = evaluate_grid(&model, &z, 8).unwrap();
        let iou = field_iou(&field, &grid8, 0.5).unwrap();
        assert!(iou >= 0.9, "auto-decoded {} iou {iou}", s.id);
    }
}

#[test]
fn view_encoder_training_leaves_the_decoder_untouched() {
    let mut model = ImplicitModel::new(small_config(), 16).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let examples: Vec<ViewExample> = (0..3)
        .map(|_| ViewExample {
            image: (0..5 * 16 * 16).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            latent: (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        })
        .collect();
    let before = model.ae.clone();
    let losses = train_singleview_encoder(&mut model, &examples, 150, |_, _| Ok(())).unwrap();
    assert_eq!(model.ae, before);
    assert!(losses.last().unwrap() < &(0.1 * losses[0]), "{:?}", (losses[0], losses.last()));
    assert!(train_singleview_encoder(&mut model, &[], 1, |_, _| Ok(())).is_err());
}

#[test]
fn checkpoints_round_trip_and_reject_other_structures() {
    let shapes = two_shapes();
    let mut cfg = small_config();
    cfg.steps = vec![3];
    let mut model = ImplicitModel::new(cfg.clone(), 16).unwrap();
    pretrain_autoencoder(&mut model, &shapes, |_, _| Ok(())).unwrap();
    let ck = model.to_checkpoint();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    let loaded = ImplicitModel::from_checkpoint(cfg.clone(), 16, &s2m_nn::Checkpoint::load(&path).unwrap()).unwrap();
    assert_eq!(loaded.ae.step_count, 3);
    assert_eq!(loaded.latent_ids(), vec!["s0".to_string(), "s1".to_string()]);
    let other = ImplicitConfig { decoder_layers: 6, ..cfg };
    assert!(ImplicitModel::from_checkpoint(other, 16, &ck).is_err());
}

#[test]
fn empty_iso_surface_gives_empty_mesh() {
    let model = ImplicitModel::new(small_config(), 16).unwrap();
    // Threshold above every sigmoid output.
    let mesh = extract_mesh(&model, &[0.0; 8], 8, 0.999_999_999).unwrap();
    assert!(mesh.is_empty());
}
