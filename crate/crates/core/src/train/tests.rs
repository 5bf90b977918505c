use super::*;
use crate::autodiff::NormSpec;
use rand::Rng;

fn tiny_config() -> TrainConfig {
    TrainConfig {
        generator: GeneratorConfig {
            depth: 3,
            base_channels: 4,
            ..GeneratorConfig::default()
        },
        discriminator: DiscriminatorConfig {
            base_channels: 4,
            n_strided: 2,
            ..DiscriminatorConfig::default()
        },
        epochs: 2,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn samples(n: usize, seed: u64) -> Vec<Sample> {
    let mut r = crate::rng::rng(seed);
    (0..n)
        .map(|i| Sample {
            id: format!("s{i}"),
            input: Tensor::from_fn([1, 12, 16, 16], |_| r.gen_range(-1.0..1.0)),
            target: Tensor::from_fn([1, 3, 16, 16], |_| r.gen_range(-1.0..1.0)),
        })
        .collect()
}

fn bits(s: &ParamSet<f32>) -> Vec<u32> {
    s.iter().flat_map(|p| p.data.iter().map(|v| v.to_bits())).collect()
}

#[test]
fn split_sizes() {
    let s = split_dataset(100, [0.7, 0.15, 0.15], 1).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (70, 15, 15));
    let s = split_dataset(2509, [0.7, 0.15, 0.15], 1).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1756, 376, 377));
    let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    all.sort();
    assert_eq!(all, (0..2509).collect::<Vec<_>>());
    assert_eq!(split_dataset(2509, [0.7, 0.15, 0.15], 1).unwrap(), s);
    assert_ne!(split_dataset(2509, [0.7, 0.15, 0.15], 2).unwrap(), s);
    assert!(split_dataset(0, [0.7, 0.15, 0.15], 1).is_err());
    assert!(split_dataset(10, [0.7, 0.2, 0.15], 1).is_err());
}

#[test]
fn epoch_order_depends_on_seed_and_epoch_only() {
    assert_eq!(epoch_order(50, 1, 3), epoch_order(50, 1, 3));
    assert_ne!(epoch_order(50, 1, 3), epoch_order(50, 1, 4));
    assert_ne!(epoch_order(50, 1, 3), epoch_order(50, 2, 3));
    let mut o = epoch_order(50, 1, 3);
    o.sort();
    assert_eq!(o, (0..50).collect::<Vec<_>>());
}

#[test]
fn fresh_discriminator_loss_near_ln2() {
    let mut st = TrainState::new(tiny_config()).unwrap();
    let s = &samples(1, 1)[0];
    let l = train_step(&mut st, &s.input, &s.target, 0).unwrap();
    assert!((l.d_loss - std::f64::consts::LN_2).abs() < 0.1, "{}", l.d_loss);
}

#[test]
fn lambda_only_scales_l1_term() {
    let s = &samples(1, 2)[0];
    let run = |lambda| {
        let mut st = TrainState::new(TrainConfig { lambda, ..tiny_config() }).unwrap();
        train_step(&mut st, &s.input, &s.target, 0).unwrap()
    };
    let (a, b) = (run(0.0), run(100.0));
    assert_eq!(a.d_loss, b.d_loss);
    assert!((b.g_loss - 100.0 * b.l1_term - a.g_loss).abs() < 1e-4, "{a:?} {b:?}");
    assert!(a.g_loss > 0.0);
}

#[test]
fn perfect_target_has_zero_l1() {
    let mut st = TrainState::new(tiny_config()).unwrap();
    let x = samples(1, 3).remove(0).input;
    let y = st.generator.infer(&x).unwrap();
    let l = train_step(&mut st, &x, &y, 0).unwrap();
    assert_eq!(l.l1_term, 0.0);
}

#[test]
fn updates_are_detached() {
    let s = &samples(1, 4)[0];
    let mut st = TrainState::new(tiny_config()).unwrap();
    let (g0, d0) = (bits(&st.generator.params), bits(&st.discriminator.params));
    let only_d = Phases {
        discriminator: true,
        generator: false,
    };
    train_step_phases(&mut st, &s.input, &s.target, 0, only_d).unwrap();
    assert_eq!(bits(&st.generator.params), g0);
    assert_ne!(bits(&st.discriminator.params), d0);
    let d1 = bits(&st.discriminator.params);
    let only_g = Phases {
        discriminator: false,
        generator: true,
    };
    train_step_phases(&mut st, &s.input, &s.target, 0, only_g).unwrap();
    assert_eq!(bits(&st.discriminator.params), d1);
    assert_ne!(bits(&st.generator.params), g0);
}

#[test]
fn non_finite_loss_reports_step() {
    let mut st = TrainState::new(tiny_config()).unwrap();
    st.step = 7;
    let last = st.discriminator.params.len() - 1;
    st.discriminator.params.get_mut(last).data[0] = f32::INFINITY;
    let s = &samples(1, 5)[0];
    match train_step(&mut st, &s.input, &s.target, 0) {
        Err(Error::Diverged { step, .. }) => assert_eq!(step, 7),
        other => panic!("{other:?}"),
    }
}

#[test]
fn one_epoch_logs_one_step_per_item() {
    let mut st = TrainState::new(TrainConfig {
        epochs: 1,
        ..tiny_config()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (log, reason) = train(&mut st, &samples(10, 6), &samples(2, 7), Some(dir.path())).unwrap();
    assert_eq!(reason, StopReason::EpochLimit);
    assert_eq!(log.steps.len(), 10);
    assert!(log.steps.windows(2).all(|w| w[1].step == w[0].step + 1));
    assert!(log.steps.iter().all(|r| r.g_loss.is_finite() && r.d_loss.is_finite()));
    let parsed = TrainLog::read_steps(&dir.path().join("train_log.csv")).unwrap();
    assert_eq!(parsed.len(), 10);
    assert_eq!(parsed[3].g_loss, log.steps[3].g_loss);
    assert!(dir.path().join("latest.gick").exists() && dir.path().join("best.gick").exists());
    assert_eq!(log.epochs.len(), 1);
}

#[test]
fn batched_training_runs() {
    let mut st = TrainState::new(TrainConfig {
        epochs: 1,
        batch_size: 3,
        ..tiny_config()
    })
    .unwrap();
    let (log, _) = train(&mut st, &samples(7, 8), &[], None).unwrap();
    assert_eq!(log.steps.len(), 3);
}

#[test]
fn resume_is_bit_identical() {
    let (train_set, val_set) = (samples(5, 9), samples(2, 10));
    let cfg = TrainConfig {
        generator: GeneratorConfig {
            norm: NormSpec::new(crate::autodiff::NormKind::Batch, 1),
            dropout: true,
            ..tiny_config().generator
        },
        ..tiny_config()
    };
    let mut full = TrainState::new(cfg.clone()).unwrap();
    train(&mut full, &train_set, &val_set, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let mut first = TrainState::new(TrainConfig { epochs: 1, ..cfg }).unwrap();
    train(&mut first, &train_set, &val_set, Some(dir.path())).unwrap();
    let mut resumed = crate::io::load_checkpoint(&dir.path().join("latest.gick")).unwrap();
    resumed.config.epochs = 2;
    train(&mut resumed, &train_set, &val_set, Some(dir.path())).unwrap();

    assert_eq!((resumed.epoch, resumed.step), (full.epoch, full.step));
    assert_eq!(bits(&resumed.generator.params), bits(&full.generator.params));
    assert_eq!(bits(&resumed.generator.buffers), bits(&full.generator.buffers));
    assert_eq!(bits(&resumed.discriminator.params), bits(&full.discriminator.params));
    for (a, b) in resumed.g_adam.iter().zip(&full.g_adam) {
        assert_eq!(a, b);
    }
    assert_eq!(resumed.best, full.best);
    assert_eq!(TrainLog::read_steps(&dir.path().join("train_log.csv")).unwrap().len(), 10);
}

#[test]
fn early_stopping_and_wall_budget() {
    let mut st = TrainState::new(TrainConfig {
        epochs: 50,
        patience: Some(0),
        ..tiny_config()
    })
    .unwrap();
    let (_, reason) = train(&mut st, &samples(2, 11), &samples(1, 12), None).unwrap();
    assert_eq!(reason, StopReason::EarlyStop);
    assert_eq!(st.epoch, 1);
    let mut st = TrainState::new(TrainConfig {
        epochs: 50,
        max_wall_seconds: Some(0.0),
        ..tiny_config()
    })
    .unwrap();
    let (_, reason) = train(&mut st, &samples(2, 11), &[], None).unwrap();
    assert_eq!((reason, st.epoch), (StopReason::WallClock, 1));
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut st = TrainState::new(TrainConfig { epochs: 1, ..tiny_config() }).unwrap();
    train(&mut st, &samples(3, 13), &samples(1, 14), None).unwrap();
    let p = dir.path().join("c.gick");
    crate::io::save_checkpoint(&p, &st).unwrap();
    let loaded = crate::io::load_checkpoint(&p).unwrap();
    let x = samples(1, 15).remove(0).input;
    let (a, b) = (st.generator.infer(&x).unwrap(), loaded.generator.infer(&x).unwrap());
    assert_eq!(a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    for (a, b) in st.d_adam.iter().zip(&loaded.d_adam) {
        assert_eq!(a, b);
    }
    assert!(st.g_adam.iter().all(|a| a.t == 3));
    let p2 = dir.path().join("c2.gick");
    crate::io::save_checkpoint(&p2, &loaded).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&p2).unwrap());

    let deeper = GeneratorConfig {
        depth: 4,
        ..st.config.generator.clone()
    };
    match crate::io::load_checkpoint_matching(&p, &deeper, &st.config.discriminator) {
        Err(Error::CheckpointMismatch { field, expected, found }) => {
            assert_eq!((field.as_str(), expected.as_str(), found.as_str()), ("generator.depth", "4", "3"));
        }
        other => panic!("{other:?}"),
    }
    assert!(crate::io::load_checkpoint_matching(&p, &st.config.generator, &st.config.discriminator).is_ok());

    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 2]).unwrap();
    assert!(matches!(crate::io::load_checkpoint(&p), Err(Error::Format { .. })));
}

struct CopyDirect;

impl ImageTranslator for CopyDirect {
    fn translate(&self, input: &Tensor<f32>) -> Result<Tensor<f32>> {
        let [_, _, h, w] = input.dims();
        Tensor::new([1, 3, h, w], input.data()[..3 * h * w].to_vec())
    }
}

fn eval_items(n: usize) -> Vec<EvalItem> {
    let mut r = crate::rng::rng(16);
    (0..n)
        .map(|i| {
            let direct = Image::from_data(16, 16, 3, (0..768).map(|_| r.gen::<f32>()).collect()).unwrap();
            let target = Image::from_data(16, 16, 3, (0..768).map(|_| r.gen::<f32>()).collect()).unwrap();
            let mut input = crate::dataset::image_to_network(&direct).into_data();
            input.extend((0..9 * 256).map(|_| 0.0f32));
            EvalItem {
                id: format!("e{i}"),
                input: Tensor::new([1, 12, 16, 16], input).unwrap(),
                direct,
                target,
                gbuffer_seconds: 0.01,
                path_trace_seconds: 2.0,
            }
        })
        .collect()
}

#[test]
fn evaluate_copy_model_matches_raster() {
    let items = eval_items(4);
    let report = evaluate(&CopyDirect, &items, 1).unwrap();
    use crate::metrics::Method;
    for m in Method::ALL {
        assert_eq!(report.items(m), 4);
    }
    let (r, g, t) = (report.summary(Method::Raster), report.summary(Method::Gan), report.summary(Method::RayTraced));
    assert!((r.l1 - g.l1).abs() < 1e-3 && (r.l2 - g.l2).abs() < 1e-3 && (r.ssim - g.ssim).abs() < 1e-6);
    assert!((r.fid - g.fid).abs() < 1e-6);
    assert_eq!((t.l1, t.l2, t.ssim, t.fid), (0.0, 0.0, 1.0, 0.0));
    assert_eq!(t.time_seconds, 2.0);
}

#[test]
fn evaluate_untrained_generator_produces_full_report() {
    let st = TrainState::new(tiny_config()).unwrap();
    let report = evaluate(&st.generator, &eval_items(3), 1).unwrap();
    assert_eq!(report.rows.len(), 9);
    assert_eq!(report.to_table().lines().count(), 6);
    let mut bad = eval_items(1);
    bad[0].target = Image::new(8, 8, 3);
    assert!(matches!(evaluate(&st.generator, &bad, 1), Err(Error::Item { .. })));
}
