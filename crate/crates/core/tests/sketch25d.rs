use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use s2m_core::render::maps::{SketchImage, ViewMap25D};
use s2m_core::sketch25d::*;
use s2m_nn::gradcheck::check_gradients;
use s2m_nn::{adam_step, AdamConfig, Graph, Mode, NodeId, ParamStore, Tensor};

const LN2: f64 = std::f64::consts::LN_2;

fn tiny_config() -> Sketch25DConfig {
    Sketch25DConfig {
        image_size: 16,
        encoder_channels: vec![4, 8, 16],
        discriminator_channels: vec![2, 2, 2, 2],
        batch_size: 2,
        checkpoint_every: 2,
        ..Sketch25DConfig::default()
    }
}

/// `N×5×S×S` tensor from per-pixel `[d, nx, ny, nz, m]` rows.
fn maps_tensor(n: usize, s: usize, mut pixel: impl FnMut(usize, usize) -> [f64; 5]) -> Tensor {
    Tensor::from_fn(&[n, 5, s, s], |i| {
        let p = i % (s * s);
        let c = (i / (s * s)) % 5;
        pixel(i / (5 * s * s), p)[c]
    })
}

fn eval_loss(pred: Tensor, gt: &Tensor, f: impl Fn(&mut Graph, NodeId, &MapTargets) -> s2m_core::error::Result<NodeId>) -> f64 {
    let targets = MapTargets::new(gt).unwrap();
    let mut g = Graph::new();
    let x = g.input(pred).unwrap();
    let l = f(&mut g, x, &targets).unwrap();
    g.value(l).item()
}

#[test]
fn depth_loss_counts_foreground_only() {
    let fg = |p: usize| p < 10;
    let gt = maps_tensor(1, 4, |_, p| if fg(p) { [0.1 * p as f64 - 0.5, 0.0, 0.0, 1.0, 1.0] } else { [1.0, 0.0, 0.0, 0.0, 0.0] });
    let shifted = Tensor::from_fn(&[1, 5, 4, 4], |i| gt.data()[i] + if i < 16 { 0.5 } else { 0.0 });
    assert_eq!(eval_loss(gt.clone(), &gt, loss_depth), 0.0);
    assert!((eval_loss(shifted, &gt, loss_depth) - 5.0).abs() < 1e-12);
}

#[test]
fn normal_loss_opposite_and_orthogonal() {
    let k = 7;
    let gt = maps_tensor(1, 4, |_, p| if p < k { [0.0, 0.0, 0.0, 1.0, 1.0] } else { [1.0, 0.0, 0.0, 0.0, 0.0] });
    let with = |n: [f64; 3]| maps_tensor(1, 4, |_, _| [0.0, n[0], n[1], n[2], 0.5]);
    assert_eq!(eval_loss(with([0.0, 0.0, 1.0]), &gt, loss_normal), 0.0);
    assert!((eval_loss(with([0.0, 0.0, -1.0]), &gt, loss_normal) - 2.0 * k as f64).abs() < 1e-12);
    assert!((eval_loss(with([1.0, 0.0, 0.0]), &gt, loss_normal) - k as f64).abs() < 1e-12);
}

#[test]
fn mask_loss_identities() {
    let gt = maps_tensor(2, 4, |v, p| if (p + v) % 3 == 0 { [0.0, 0.0, 0.0, 1.0, 1.0] } else { [1.0, 0.0, 0.0, 0.0, 0.0] });
    let half = maps_tensor(2, 4, |_, _| [0.0, 0.0, 0.0, 1.0, 0.5]);
    assert!((eval_loss(half, &gt, loss_mask) - 32.0 * LN2).abs() < 1e-12);
    let exact = eval_loss(gt.clone(), &gt, loss_mask);
    assert!(exact <= 32.0 * -(1.0 - PROB_CLAMP).ln() + 1e-15);
    assert!(exact < 1e-5);
}

#[test]
fn adversarial_identities() {
    let v = 12;
    let mut g = Graph::new();
    let half = g.input(Tensor::full(&[v, 1], 0.5)).unwrap();
    let l = loss_adversarial(&mut g, half).unwrap();
    assert!((g.value(l).item() - v as f64 * LN2).abs() < 1e-12);
    let one = g.input(Tensor::full(&[v, 1], 1.0)).unwrap();
    let l = loss_adversarial(&mut g, one).unwrap();
    assert!(g.value(l).item() <= v as f64 * 1.1e-7);
    let d = discriminator_loss(&mut g, half, half).unwrap();
    assert!((g.value(d).item() - 2.0 * v as f64 * LN2).abs() < 1e-12);
}

/// 2×2 maps, pixels 0 and 2 foreground.
fn micro_batch() -> (Tensor, Tensor) {
    let gt = maps_tensor(1, 2, |_, p| match p {
        0 => [0.2, 0.0, 0.0, 1.0, 1.0],
        2 => [-0.4, 0.0, 0.0, 1.0, 1.0],
        _ => [1.0, 0.0, 0.0, 0.0, 0.0],
    });
    let pred = maps_tensor(1, 2, |_, p| match p {
        0 => [0.5, 0.0, 0.0, 1.0, 0.5],
        1 => [0.0, 0.0, 1.0, 0.0, 0.5],
        2 => [-0.4, 1.0, 0.0, 0.0, 0.9],
        _ => [0.3, 0.0, 0.0, -1.0, 0.2],
    });
    (pred, gt)
}

#[test]
fn total_loss_matches_hand_sum() {
    let (pred, gt) = micro_batch();
    let targets = MapTargets::new(&gt).unwrap();
    let mut g = Graph::new();
    let x = g.input(pred).unwrap();
    let d = g.input(Tensor::new(vec![1, 1], vec![0.25]).unwrap()).unwrap();
    let nodes = total_loss_25d(&mut g, x, &targets, Some(d), [1.0, 2.0, 3.0, 0.5]).unwrap();
    let depth = 0.3;
    let normal = 1.0;
    let mask = 2.0 * LN2 - 0.9f64.ln() - 0.8f64.ln();
    let adv = -0.25f64.ln();
    assert!((g.value(nodes.depth).item() - depth).abs() < 1e-12);
    assert!((g.value(nodes.normal).item() - normal).abs() < 1e-12);
    assert!((g.value(nodes.mask).item() - mask).abs() < 1e-12);
    let expected = depth + 2.0 * normal + 3.0 * mask + 0.5 * adv;
    assert!((g.value(nodes.total).item() - expected).abs() < 1e-12);

    // Dropping the adversarial weight leaves the supervised sum.
    let mut g = Graph::new();
    let (pred, _) = micro_batch();
    let x = g.input(pred).unwrap();
    let nodes = total_loss_25d(&mut g, x, &targets, None, [1.0, 2.0, 3.0, 0.0]).unwrap();
    assert!(nodes.adv.is_none());
    assert!((g.value(nodes.total).item() - (depth + 2.0 * normal + 3.0 * mask)).abs() < 1e-12);
}

#[test]
fn total_gradient_is_weighted_component_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let gt = maps_tensor(3, 4, |_, _| {
        if rng.gen_bool(0.5) {
            [rng.gen_range(-1.0..1.0), 0.0, 1.0, 0.0, 1.0]
        } else {
            [1.0, 0.0, 0.0, 0.0, 0.0]
        }
    });
    let pred = Tensor::from_fn(&[3, 5, 4, 4], |i| if i % 80 >= 64 { 0.1 + 0.8 * ((i * 37) % 11) as f64 / 11.0 } else { ((i * 13) % 7) as f64 / 7.0 - 0.4 });
    let targets = MapTargets::new(&gt).unwrap();
    let lambda = [0.7, 1.3, 2.1, 0.0];
    let grad_of = |which: usize| {
        let mut g = Graph::new();
        let x = g.input(pred.clone()).unwrap();
        let n = total_loss_25d(&mut g, x, &targets, None, lambda).unwrap();
        let node = [n.depth, n.normal, n.mask, n.total][which];
        g.backward(node).unwrap().node(x).unwrap().clone()
    };
    let parts: Vec<Tensor> = (0..3).map(grad_of).collect();
    let total = grad_of(3);
    for i in 0..total.len() {
        let sum: f64 = (0..3).map(|k| lambda[k] * parts[k].data()[i]).sum();
        assert!((sum - total.data()[i]).abs() < 1e-12);
    }
}

#[test]
fn loss_gradients_match_finite_differences() {
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, s) = (1 + seed as usize % 2, 2 + seed as usize % 3);
        let gt = maps_tensor(n, s, |_, _| {
            let v: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let len = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            let m = if rng.gen_bool(0.6) { 1.0 } else { 0.0 };
            [rng.gen_range(-1.0..1.0), v[0] / len, v[1] / len, v[2] / len, m]
        });
        let pred = Tensor::from_fn(&[n, 5, s, s], |i| {
            if (i / (s * s)) % 5 == 4 {
                rng.gen_range(0.05..0.95)
            } else {
                rng.gen_range(-1.0..1.0)
            }
        });
        let d = Tensor::from_fn(&[n, 1], |_| rng.gen_range(0.05..0.95));
        let targets = MapTargets::new(&gt).unwrap();
        let store = ParamStore::new();
        for which in 0..5 {
            let report = check_gradients(&[pred.clone(), d.clone()], &store, 1e-5, seed, |g, ids, _| {
                let nodes = total_loss_25d(g, ids[0], &targets, Some(ids[1]), [1.0, 0.5, 2.0, 0.3]).unwrap();
                Ok([nodes.depth, nodes.normal, nodes.mask, nodes.adv.unwrap(), nodes.total][which])
            })
            .unwrap();
            assert!(report.max_rel_err <= 1e-4, "seed {seed} term {which}: {}", report.max_rel_err);
        }
    }
}

/// Whole-network check. The loss sums thousands of pixels, so individual
/// input gradients are compared against the largest one rather than
/// elementwise.
#[test]
fn generator_and_discriminator_gradients_match_finite_differences() {
    let model = Sketch25DModel::new(Sketch25DConfig { dropout: 0.3, ..tiny_config() }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sketch = Tensor::from_fn(&[2, 1, 16, 16], |_| rng.gen_range(0.0..1.0));
    let gt = maps_tensor(24, 16, |_, _| {
        if rng.gen_bool(0.5) {
            [rng.gen_range(-1.0..1.0), 0.0, 0.0, 1.0, 1.0]
        } else {
            [1.0, 0.0, 0.0, 0.0, 0.0]
        }
    });
    let targets = MapTargets::new(&gt).unwrap();
    let loss_of = |x: &Tensor| {
        let mut g = Graph::with_seed(3);
        let xi = g.input(x.clone()).unwrap();
        let fake = model.forward(&mut g, xi, Mode::Train).unwrap();
        let d = model.discriminate(&mut g, fake).unwrap();
        let total = total_loss_25d(&mut g, fake, &targets, Some(d), [1.0, 1.0, 1.0, 0.01]).unwrap().total;
        (g, xi, total)
    };
    let (g, xi, total) = loss_of(&sketch);
    let analytic = g.backward(total).unwrap().node(xi).unwrap().clone();
    let scale = analytic.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..40 {
        let i = rng.gen_range(0..sketch.len());
        let mut x = sketch.clone();
        x.data_mut()[i] += h;
        let up = { let (g, _, l) = loss_of(&x); g.value(l).item() };
        x.data_mut()[i] -= 2.0 * h;
        let down = { let (g, _, l) = loss_of(&x); g.value(l).item() };
        worst = worst.max(((up - down) / (2.0 * h) - analytic.data()[i]).abs() / scale);
    }
    assert!(worst <= 1e-4, "generator: {worst}");

    let maps = Tensor::from_fn(&[2, 5, 16, 16], |_| rng.gen_range(-1.0..1.0));
    let report = check_gradients(&[maps], &model.disc, 1e-5, 3, |g, ids, store| {
        let probe = Sketch25DModel { disc: store.clone(), ..model.clone() };
        let dr = probe.discriminate(g, ids[0]).unwrap();
        let fake = g.scale(ids[0], -0.5)?;
        let df = probe.discriminate(g, fake).unwrap();
        Ok(discriminator_loss(g, dr, df).unwrap())
    })
    .unwrap();
    assert!(report.max_rel_err <= 1e-4, "discriminator: {}", report.max_rel_err);
}

#[test]
fn forward_shapes_and_ranges() {
    for separate in [false, true] {
        let model = Sketch25DModel::new(Sketch25DConfig { separate_decoders: separate, ..tiny_config() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sketch = SketchImage {
            size: 16,
            data: (0..256).map(|_| if rng.gen_bool(0.2) { 1.0 } else { 0.0 }).collect(),
        };
        let maps = model.predict(&sketch).unwrap();
        assert_eq!(maps.len(), 12);
        for m in &maps {
            assert_eq!(m.size(), 16);
            for row in 0..16 {
                for col in 0..16 {
                    let p = m.pixel(col, row);
                    assert!((-1.0..=1.0).contains(&p[0]));
                    assert!((0.0..=1.0).contains(&p[4]));
                    let len = (p[1] * p[1] + p[2] * p[2] + p[3] * p[3]).sqrt();
                    // The normalizer adds 1e-12 under the square root.
                    assert!(len <= 1.0 && len > 0.999, "{len}");
                }
            }
        }
        assert_eq!(maps, model.predict(&sketch).unwrap());
    }
    let model = Sketch25DModel::new(tiny_config()).unwrap();
    assert!(model.predict(&SketchImage::blank(32)).is_err());
}

#[test]
fn encoder_reaches_two_by_two_and_decoder_sees_skips() {
    for size in [16usize, 32, 64, 128, 256] {
        assert_eq!(size >> encoder_depth(size), 2);
        assert_eq!(*default_encoder_channels(size).last().unwrap(), 512);
    }
    assert_eq!(default_encoder_channels(64), vec![32, 64, 128, 256, 512]);

    let model = Sketch25DModel::new(tiny_config()).unwrap();
    let enc = [4usize, 8, 16];
    assert_eq!(model.gen.value("enc0.weight").unwrap().shape(), &[4, 1, 4, 4]);
    assert_eq!(model.gen.value("enc2.weight").unwrap().shape(), &[16, 8, 4, 4]);
    // Decoder layer j sees the upsampled layer below concatenated with skip j.
    assert_eq!(model.gen.value("dec.1.weight").unwrap().shape(), &[enc[1], enc[2] + enc[1], 3, 3]);
    assert_eq!(model.gen.value("dec.0.weight").unwrap().shape(), &[enc[0], enc[1] + enc[0], 3, 3]);
    // The head also sees the raw sketch.
    assert_eq!(model.gen.value("dec.head.weight").unwrap().shape(), &[60, enc[0] + 1, 3, 3]);
}

fn toy_examples(n: usize, views: usize, seed: u64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r = rng.gen_range(3.0..6.0);
            let inside = |c: usize, row: usize| ((c as f64 - 7.5).powi(2) + (row as f64 - 7.5).powi(2)).sqrt() < r;
            let mut sketch = SketchImage::blank(16);
            let mut view = ViewMap25D::background(16);
            for row in 0..16 {
                for c in 0..16 {
                    if inside(c, row) {
                        view.set_pixel(c, row, [-0.5, 0.0, 0.0, 1.0, 1.0]);
                        if !(inside(c + 1, row) && c > 0 && inside(c - 1, row) && inside(c, row + 1) && row > 0 && inside(c, row - 1)) {
                            sketch.data[row * 16 + c] = 1.0;
                        }
                    }
                }
            }
            Example {
                sketch,
                views: vec![view; views],
            }
        })
        .collect()
}

fn checkpoint_bytes(model: &Sketch25DModel) -> Vec<u8> {
    let mut buf = Vec::new();
    model.to_checkpoint().write_to(&mut buf).unwrap();
    buf
}

#[test]
fn training_is_deterministic_and_checkpoints_on_schedule() {
    let examples = toy_examples(3, 12, 5);
    let run = || {
        let mut model = Sketch25DModel::new(tiny_config()).unwrap();
        let mut seen = Vec::new();
        let trace = train_25d(&mut model, &examples, 5, |m, t| {
            seen.push((m.gen.step_count, t.rows.len()));
            Ok(())
        })
        .unwrap();
        (model, trace, seen)
    };
    let (a, ta, seen) = run();
    let (b, tb, _) = run();
    assert_eq!(seen, vec![(2, 2), (4, 4), (5, 5)]);
    assert_eq!(ta, tb);
    assert_eq!(checkpoint_bytes(&a), checkpoint_bytes(&b));
    assert_eq!(ta.rows.iter().map(|r| r.step).collect::<Vec<_>>(), vec![1, 2, 3, 4, 5]);
    assert!(ta.rows.iter().all(|r| r.total.is_finite() && r.disc > 0.0));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    ta.save_csv(&path).unwrap();
    assert_eq!(LossTrace::load_csv(&path).unwrap(), ta);
}

#[test]
fn supervised_only_training_leaves_discriminator_alone() {
    let examples = toy_examples(2, 12, 6);
    let mut model = Sketch25DModel::new(Sketch25DConfig { lambda: [1.0, 1.0, 1.0, 0.0], ..tiny_config() }).unwrap();
    let before = model.disc.clone();
    let trace = train_25d(&mut model, &examples, 3, |_, _| Ok(())).unwrap();
    assert_eq!(model.disc, before);
    assert!(trace.rows.iter().all(|r| r.adv == 0.0 && r.disc == 0.0));
    for r in &trace.rows {
        assert!((r.total - (r.depth + r.normal + r.mask)).abs() <= 1e-9 * r.total);
    }
}

#[test]
fn overfits_a_small_set() {
    let examples = toy_examples(2, 12, 7);
    let mut model = Sketch25DModel::new(Sketch25DConfig { dropout: 0.0, ..tiny_config() }).unwrap();
    let before = evaluate_25d(&model, &examples).unwrap();
    let trace = train_25d(&mut model, &examples, 60, |_, _| Ok(())).unwrap();
    let after = evaluate_25d(&model, &examples).unwrap();
    assert!(after.depth_l1 < 0.5 * before.depth_l1, "{before:?} -> {after:?}");
    let means = block_means(&trace.totals(), 20);
    assert!(means[2] < means[0]);
}

#[test]
fn checkpoint_round_trip_and_structure_mismatch() {
    let examples = toy_examples(2, 12, 8);
    let mut model = Sketch25DModel::new(tiny_config()).unwrap();
    train_25d(&mut model, &examples, 2, |_, _| Ok(())).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s1.ckpt");
    model.to_checkpoint().save(&path).unwrap();
    let ck = s2m_nn::Checkpoint::load(&path).unwrap();
    let loaded = Sketch25DModel::from_checkpoint(tiny_config(), &ck).unwrap();
    assert_eq!(loaded.gen.step_count, 2);
    // Checkpoints hold f32 values.
    let (a, b) = (loaded.predict(&examples[0].sketch).unwrap(), model.predict(&examples[0].sketch).unwrap());
    for (x, y) in a.iter().zip(&b) {
        assert!(x.planar().iter().zip(y.planar()).all(|(p, q)| (p - q).abs() < 1e-4));
    }
    let other = Sketch25DConfig { separate_decoders: true, ..tiny_config() };
    assert!(Sketch25DModel::from_checkpoint(other, &ck).is_err());
    // Non-structural settings may change between runs.
    assert!(Sketch25DModel::from_checkpoint(Sketch25DConfig { lr: 5e-4, ..tiny_config() }, &ck).is_ok());
}

#[test]
fn batches_cover_each_epoch_once() {
    let n = 7;
    let mut seen = vec![0; n];
    for step in 0..7 {
        let idx = batch_indices(9, step, 2, n);
        assert_eq!(idx, batch_indices(9, step, 2, n));
        for i in idx {
            seen[i] += 1;
        }
    }
    assert!(seen.iter().all(|&c| c == 2));
    assert_eq!(block_means(&[1.0, 3.0, 5.0, 7.0, 100.0], 2), vec![2.0, 6.0]);
}

#[test]
fn map_errors_hand_cases() {
    let mut gt = ViewMap25D::background(2);
    gt.set_pixel(0, 0, [0.1, 0.0, 0.0, 1.0, 1.0]);
    gt.set_pixel(1, 1, [0.3, 1.0, 0.0, 0.0, 1.0]);
    let mut pred = gt.clone();
    assert_eq!(map_errors(&[pred.clone()], &[gt.clone()]).depth_l1, 0.0);
    pred.set_pixel(0, 0, [0.4, 0.0, 0.0, -1.0, 1.0]);
    pred.set_pixel(1, 1, [0.3, 0.0, 1.0, 0.0, 1.0]);
    pred.set_pixel(1, 0, [-1.0, 0.0, 0.0, 1.0, 1.0]);
    let e = map_errors(&[pred], &[gt]);
    assert_eq!(e.foreground, 2);
    assert!((e.depth_l1 - 0.15).abs() < 1e-12);
    assert!((e.normal_deg - 135.0).abs() < 1e-9);
}

/// Linear generator `a·z + b` against a logistic discriminator on 1-D
/// data, trained with the same alternating losses as the image model.
#[test]
fn toy_gan_settles_near_one_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let (mut gen, mut disc) = (ParamStore::new(), ParamStore::new());
    gen.register("a", Tensor::full(&[1, 1], 0.2)).unwrap();
    gen.register("b", Tensor::full(&[1], -1.0)).unwrap();
    disc.register("w", Tensor::full(&[1, 1], 0.1)).unwrap();
    disc.register("c", Tensor::zeros(&[1])).unwrap();
    let opt = AdamConfig { lr: 5e-3, beta1: 0.5, ..AdamConfig::default() };
    let batch = 64;
    let d_of = |g: &mut Graph, x: NodeId, s: &ParamStore| -> NodeId {
        let w = g.param(s, "w").unwrap();
        let c = g.param(s, "c").unwrap();
        let logit = g.linear(x, w, Some(c)).unwrap();
        g.sigmoid(logit).unwrap()
    };
    let (mut real_p, mut fake_p) = (Vec::new(), Vec::new());
    for step in 0..3000 {
        let real = Tensor::from_fn(&[batch, 1], |_| 2.0 + 0.5 * (rng.gen::<f64>() - 0.5));
        let noise = Tensor::from_fn(&[batch, 1], |_| rng.gen::<f64>() - 0.5);
        let fake_of = |g: &mut Graph| {
            let z = g.input(noise.clone()).unwrap();
            let a = g.param(&gen, "a").unwrap();
            let b = g.param(&gen, "b").unwrap();
            g.linear(z, a, Some(b)).unwrap()
        };
        let mut g = Graph::new();
        let f = fake_of(&mut g);
        let fv = g.value(f).clone();
        let mut gd = Graph::new();
        let r = gd.input(real).unwrap();
        let f = gd.input(fv).unwrap();
        let dr = d_of(&mut gd, r, &disc);
        let df = d_of(&mut gd, f, &disc);
        let loss = discriminator_loss(&mut gd, dr, df).unwrap();
        gd.backward_into(loss, &mut disc).unwrap();
        adam_step(&mut disc, &opt);
        if step >= 2500 {
            real_p.push(gd.value(dr).data().iter().sum::<f64>() / batch as f64);
            fake_p.push(gd.value(df).data().iter().sum::<f64>() / batch as f64);
        }

        let mut g = Graph::new();
        let f = fake_of(&mut g);
        let df = d_of(&mut g, f, &disc);
        let loss = loss_adversarial(&mut g, df).unwrap();
        g.backward_into(loss, &mut gen).unwrap();
        adam_step(&mut gen, &opt);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (dr, df) = (mean(&real_p), mean(&fake_p));
    assert!((0.3..=0.7).contains(&dr) && (0.3..=0.7).contains(&df), "D(real) {dr} D(fake) {df}");
}

