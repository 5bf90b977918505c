use super::*;
use crate::autodiff::{NormKind, Reduction, Tensor};
use rand::Rng;

fn small_g(depth: usize, norm: NormSpec) -> GeneratorConfig {
    GeneratorConfig {
        depth,
        base_channels: 8,
        norm,
        ..GeneratorConfig::default()
    }
}

fn random_input<T: Scalar>(dims: [usize; 4], seed: u64, scale: f64) -> Tensor<T> {
    let mut r = crate::rng::rng(seed);
    Tensor::from_fn(dims, |_| T::of(r.gen_range(-scale..scale)))
}

#[test]
fn desk_scale_shapes() {
    let g = Generator::<f32>::new(GeneratorConfig::default()).unwrap();
    let x = random_input::<f32>([1, 12, 512, 1024], 1, 1.0);
    let mut tape = Tape::new();
    let xv = tape.constant(&x);
    let vars = g.params.register(&mut tape, None);
    let (skips, _) = g.encode(&mut tape, &vars, xv, &ForwardCtx::eval()).unwrap();
    assert_eq!(tape.dims(*skips.last().unwrap()), [1, 512, 2, 4]);
    drop(tape);
    assert_eq!(g.infer(&x).unwrap().dims(), [1, 3, 512, 1024]);
}

#[test]
fn desk_scale_shapes_and_range() {
    let g = Generator::<f32>::new(GeneratorConfig {
        depth: 6,
        base_channels: 16,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let x = random_input::<f32>([1, 12, 64, 64], 2, 50.0);
    let y = g.infer(&x).unwrap();
    assert_eq!(y.dims(), [1, 3, 64, 64]);
    assert!(y.data().iter().all(|&v| v > -1.0 && v < 1.0));
}

#[test]
fn indivisible_input_rejected() {
    let g = Generator::<f32>::new(small_g(3, NormSpec::group(2))).unwrap();
    let err = g.infer(&Tensor::zeros([1, 12, 20, 16])).unwrap_err();
    assert!(err.to_string().contains("divisible by 8"), "{err}");
    assert!(g.infer(&Tensor::zeros([1, 11, 16, 16])).is_err());
}

#[test]
fn indivisible_groups_rejected() {
    assert!(Generator::<f32>::new(small_g(3, NormSpec::group(3))).is_err());
}

#[test]
fn batch_composition_independence() {
    for spec in [NormSpec::group(2), NormSpec::new(NormKind::Instance, 1)] {
        let g = Generator::<f32>::new(small_g(4, spec)).unwrap();
        let a = random_input::<f32>([1, 12, 32, 32], 3, 1.0);
        let b = random_input::<f32>([1, 12, 32, 32], 4, 1.0);
        let both = g.infer(&Tensor::stack(&[&a, &b]).unwrap()).unwrap();
        let ya = g.infer(&a).unwrap();
        let yb = g.infer(&b).unwrap();
        let sep = Tensor::stack(&[&ya, &yb]).unwrap();
        let worst = both.data().iter().zip(sep.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f32::max);
        assert!(worst <= 1e-5, "{:?}: {worst}", spec.kind);
    }
}

#[test]
fn top_skip_is_live() {
    let g = Generator::<f32>::new(small_g(4, NormSpec::group(2))).unwrap();
    let x = random_input::<f32>([1, 12, 32, 32], 5, 1.0);
    let run = |ablate| {
        let mut tape = Tape::new();
        let xv = tape.constant(&x);
        let ctx = ForwardCtx {
            ablate_skip: ablate,
            ..ForwardCtx::eval()
        };
        let (y, _) = g.forward(&mut tape, xv, None, &ctx).unwrap();
        tape.tensor(y)
    };
    let full = run(None);
    let cut = run(Some(1));
    let diff: f32 = full.data().iter().zip(cut.data()).map(|(a, b)| (a - b).abs()).sum();
    assert!(diff > 0.0);
}

#[test]
fn init_statistics() {
    let g = Generator::<f64>::new(GeneratorConfig {
        depth: 5,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let weights: Vec<f64> = g.params.iter().filter(|p| p.name.ends_with(".weight")).flat_map(|p| p.data.clone()).collect();
    assert!(weights.len() >= 100_000);
    let n = weights.len() as f64;
    let mean = weights.iter().sum::<f64>() / n;
    let std = (weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!(mean.abs() < 0.002 && (std - 0.02).abs() < 0.002, "{mean} {std}");
    let gammas: Vec<f64> = g.params.iter().filter(|p| p.name.ends_with(".gamma")).flat_map(|p| p.data.clone()).collect();
    let gm = gammas.iter().sum::<f64>() / gammas.len() as f64;
    assert!((gm - 1.0).abs() < 0.005);
    for p in g.params.iter().filter(|p| p.name.ends_with(".beta") || p.name.ends_with(".bias")) {
        assert!(p.data.iter().all(|&v| v == 0.0));
    }
}

#[test]
fn same_seed_same_weights() {
    let a = Generator::<f32>::new(small_g(4, NormSpec::group(2))).unwrap();
    let b = Generator::<f32>::new(small_g(4, NormSpec::group(2))).unwrap();
    assert_eq!(a.params, b.params);
    let c = Generator::<f32>::new(GeneratorConfig {
        seed: 9,
        ..small_g(4, NormSpec::group(2))
    })
    .unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn discriminator_patch_sizes() {
    let d = Discriminator::<f32>::new(DiscriminatorConfig::default()).unwrap();
    let cond = random_input::<f32>([1, 12, 256, 256], 6, 1.0);
    let cand = random_input::<f32>([1, 3, 256, 256], 7, 1.0);
    assert_eq!(d.infer(&cond, &cand).unwrap().dims(), [1, 1, 30, 30]);
    for (h, w, want) in [(64, 64, (6, 6)), (64, 128, (6, 14)), (256, 256, (30, 30))] {
        assert_eq!(d.config.output_size(h, w), Some(want));
    }
    let cond = random_input::<f32>([2, 12, 64, 64], 8, 1.0);
    let cand = random_input::<f32>([2, 3, 64, 64], 9, 1.0);
    assert_eq!(d.infer(&cond, &cand).unwrap().dims(), [2, 1, 6, 6]);
}

#[test]
fn discriminator_rejects_mismatch() {
    let d = Discriminator::<f32>::new(DiscriminatorConfig {
        base_channels: 4,
        ..DiscriminatorConfig::default()
    })
    .unwrap();
    let cond = Tensor::zeros([1, 12, 64, 64]);
    assert!(d.infer(&cond, &Tensor::zeros([1, 3, 64, 32])).is_err());
    assert!(d.infer(&cond, &Tensor::zeros([1, 4, 64, 64])).is_err());
    assert!(d.infer(&Tensor::zeros([1, 12, 16, 16]), &Tensor::zeros([1, 3, 16, 16])).is_err());
}

#[test]
fn zero_weights_give_bias_logits() {
    let mut d = Discriminator::<f32>::new(DiscriminatorConfig {
        base_channels: 4,
        ..DiscriminatorConfig::default()
    })
    .unwrap();
    let last = d.params.len() - 1;
    assert_eq!(d.params.get(last).name, "out.conv.bias");
    for p in d.params.iter_mut() {
        if p.name.ends_with(".weight") {
            p.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    d.params.get_mut(last).data[0] = 0.37;
    let y = d
        .infer(&random_input([1, 12, 64, 64], 10, 1.0), &random_input([1, 3, 64, 64], 11, 1.0))
        .unwrap();
    assert!(y.data().iter().all(|&v| v == 0.37));
}

#[test]
fn generator_input_gradient_matches_finite_difference() {
    let g = Generator::<f64>::new(small_g(3, NormSpec::group(2))).unwrap();
    let x = random_input::<f64>([1, 12, 8, 8], 12, 1.0);
    let mean_out = |x: &Tensor<f64>| {
        let mut tape = Tape::new();
        let xv = tape.leaf(x);
        let (y, _) = g.forward(&mut tape, xv, None, &ForwardCtx::eval()).unwrap();
        let m = tape.mean(y);
        tape.scalar(m)
    };
    let mut tape = Tape::new();
    let xv = tape.leaf(&x.clone().with_grad());
    let (y, _) = g.forward(&mut tape, xv, None, &ForwardCtx::eval()).unwrap();
    let m = tape.mean(y);
    tape.backward(m).unwrap();
    let grad = tape.grad(xv).unwrap().to_vec();
    assert!(grad.iter().all(|v| v.is_finite()) && grad.iter().any(|&v| v != 0.0));
    let h = 1e-6;
    for i in (0..x.len()).step_by(97) {
        let (mut p, mut q) = (x.clone(), x.clone());
        p.data_mut()[i] += h;
        q.data_mut()[i] -= h;
        let fd = (mean_out(&p) - mean_out(&q)) / (2.0 * h);
        assert!((fd - grad[i]).abs() <= 1e-6 + 1e-4 * fd.abs(), "{i}: {fd} vs {}", grad[i]);
    }
}

/// `BCE(D(x, G(x)), 1) + λ·L1(G(x), y)` with fresh tape; gradients w.r.t. generator set 0.
fn generator_loss(g: &Generator<f64>, d: &Discriminator<f64>, x: &Tensor<f64>, y: &Tensor<f64>, grads: bool) -> (f64, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let yv = tape.constant(y);
    let (fake, _) = g.forward(&mut tape, xv, grads.then_some(0), &ForwardCtx::train(0)).unwrap();
    let (logits, _) = d.forward(&mut tape, xv, fake, None, &ForwardCtx::train(0)).unwrap();
    let ones = tape.constant(&Tensor::full(tape.dims(logits), 1.0));
    let adv = tape.bce_with_logits(logits, ones).unwrap();
    let l1 = tape.l1_loss(fake, yv, Reduction::Mean).unwrap();
    let l1 = tape.scale(l1, 100.0);
    let loss = tape.add(adv, l1).unwrap();
    let value = tape.scalar(loss);
    if !grads {
        return (value, vec![]);
    }
    tape.backward(loss).unwrap();
    let mut out = vec![vec![]; g.params.len()];
    for (i, gr) in tape.param_grads(0) {
        out[i] = gr.map(|s| s.to_vec()).unwrap_or_else(|| vec![0.0; g.params.get(i).data.len()]);
    }
    (value, out)
}

#[test]
fn end_to_end_generator_gradient() {
    let g = Generator::<f64>::new(GeneratorConfig {
        depth: 4,
        base_channels: 4,
        ..GeneratorConfig::default()
    })
    .unwrap();
    let d = Discriminator::<f64>::new(DiscriminatorConfig {
        base_channels: 4,
        n_strided: 2,
        ..DiscriminatorConfig::default()
    })
    .unwrap();
    let x = random_input::<f64>([1, 12, 16, 16], 13, 1.0);
    let y = random_input::<f64>([1, 3, 16, 16], 14, 0.9);
    let (_, analytic) = generator_loss(&g, &d, &x, &y, true);

    let h = 1e-6;
    let mut r = crate::rng::rng(15);
    let (mut num, mut ana) = (Vec::new(), Vec::new());
    for pi in 0..g.params.len() {
        let len = g.params.get(pi).data.len();
        for _ in 0..len.min(6) {
            let i = r.gen_range(0..len);
            let mut gp = g.clone();
            gp.params.get_mut(pi).data[i] += h;
            let mut gm = g.clone();
            gm.params.get_mut(pi).data[i] -= h;
            num.push((generator_loss(&gp, &d, &x, &y, false).0 - generator_loss(&gm, &d, &x, &y, false).0) / (2.0 * h));
            ana.push(analytic[pi][i]);
        }
    }
    let diff = num.iter().zip(&ana).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = num.iter().map(|a| a.abs()).fold(0.0, f64::max);
    assert!(diff / scale < 1e-3, "rel err {}", diff / scale);
}

#[test]
fn batch_norm_running_stats_update() {
    let mut g = Generator::<f32>::new(small_g(3, NormSpec::new(NormKind::Batch, 1))).unwrap();
    let x = random_input::<f32>([2, 12, 16, 16], 16, 1.0);
    let before = g.buffers.clone();
    let mut tape = Tape::new();
    let xv = tape.constant(&x);
    let (_, updates) = g.forward(&mut tape, xv, Some(0), &ForwardCtx::train(0)).unwrap();
    assert_eq!(updates.entries.len(), 2 + 2);
    g.apply_stat_updates(&updates);
    assert_ne!(before, g.buffers);
    let y = g.infer(&x).unwrap();
    assert!(y.is_finite());
}
