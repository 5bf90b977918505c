//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --release --test acceptance -- 1 3` runs a subset. The desk-scale
//! reproduction (criterion 4) caches its dataset and training run under
//! `CARGO_TARGET_TMPDIR`, resuming an interrupted run from its last checkpoint.

use gigan::autodiff::grad_check::check;
use gigan::autodiff::{Activation, Dims, Mode, NormKind, NormSpec, Reduction, Tape, Tensor, Var};
use gigan::dataset::{self, GenConfig};
use gigan::io;
use gigan::math::{Ray, Vec3};
use gigan::metrics::{self, time_op, FeatureStats, Method, SsimParams};
use gigan::models::{Discriminator, DiscriminatorConfig, ForwardCtx, Generator, GeneratorConfig};
use gigan::pixels::Image;
use gigan::render::{self, brute_force_intersect, build_bvh, PTConfig, Triangle};
use gigan::scene::{generate_scene, Camera, DirectionalLight, Quad, Scene, SceneConfig, Tessellation};
use gigan::train::{self, split_dataset, StopReason, TrainConfig, TrainState};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e<E: std::fmt::Display>(err: E) -> String {
    err.to_string()
}

fn randn(dims: Dims, seed: u64) -> Tensor<f64> {
    let mut r = gigan::rng::rng(seed);
    Tensor::from_fn(dims, |_| r.sample(StandardNormal))
}

fn project(tape: &mut Tape<f64>, y: Var, seed: u64) -> gigan::Result<Var> {
    let w = tape.constant(&randn(tape.dims(y), seed));
    let p = tape.mul(y, w)?;
    Ok(tape.sum(p))
}

// ---------------------------------------------------------------- 1

const SHAPES: [(Dims, usize, usize, usize, usize); 5] = [
    ([1, 1, 4, 4], 1, 2, 1, 0),
    ([1, 2, 5, 5], 3, 3, 1, 1),
    ([2, 3, 6, 4], 2, 4, 2, 1),
    ([1, 4, 8, 8], 2, 4, 2, 1),
    ([2, 2, 7, 5], 3, 3, 2, 0),
];

fn generator_loss(g: &Generator<f64>, d: &Discriminator<f64>, x: &Tensor<f64>, y: &Tensor<f64>, grads: bool) -> (f64, Vec<Vec<f64>>) {
    let mut tape = Tape::new();
    let (xv, yv) = (tape.constant(x), tape.constant(y));
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

fn end_to_end_rel_err() -> f64 {
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
    let mut r = gigan::rng::rng(13);
    let x = Tensor::from_fn([1, 12, 16, 16], |_| r.gen_range(-1.0..1.0));
    let y = Tensor::from_fn([1, 3, 16, 16], |_| r.gen_range(-0.9..0.9));
    let (_, analytic) = generator_loss(&g, &d, &x, &y, true);
    let h = 1e-6;
    let (mut num, mut ana) = (Vec::new(), Vec::new());
    for pi in 0..g.params.len() {
        let len = g.params.get(pi).data.len();
        for _ in 0..len.min(6) {
            let i = r.gen_range(0..len);
            let (mut gp, mut gm) = (g.clone(), g.clone());
            gp.params.get_mut(pi).data[i] += h;
            gm.params.get_mut(pi).data[i] -= h;
            num.push((generator_loss(&gp, &d, &x, &y, false).0 - generator_loss(&gm, &d, &x, &y, false).0) / (2.0 * h));
            ana.push(analytic[pi][i]);
        }
    }
    let diff = num.iter().zip(&ana).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    diff / num.iter().map(|a| a.abs()).fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let (mut worst, mut checks) = (0.0f64, 0);
    let mut record = |name: String, err: f64| -> Result<(), String> {
        worst = worst.max(err);
        checks += 1;
        ensure(err < 1e-4, || format!("{name}: rel err {err:.2e}"))
    };
    for (i, &(dims, cout, k, s, p)) in SHAPES.iter().enumerate() {
        let seed = 1000 + 10 * i as u64;
        let c = dims[1];
        let (x, b) = (randn(dims, seed), randn([1, cout, 1, 1], seed + 2));
        let w = randn([cout, c, k, k], seed + 1);
        let err = check(&[x.clone(), w, b.clone()], |t, v| {
            let y = t.conv2d(v[0], v[1], Some(v[2]), s, p)?;
            project(t, y, seed + 3)
        });
        record(format!("conv2d shape {i}"), err)?;
        let wt = randn([c, cout, k, k], seed + 4);
        let err = check(&[x.clone(), wt, b], |t, v| {
            let y = t.conv_transpose2d(v[0], v[1], Some(v[2]), s, p)?;
            project(t, y, seed + 5)
        });
        record(format!("conv_transpose2d shape {i}"), err)?;
        for kind in [Activation::Relu, Activation::LEAKY, Activation::Tanh, Activation::Sigmoid] {
            let err = check(std::slice::from_ref(&x), |t, v| {
                let y = t.activation(v[0], kind)?;
                project(t, y, seed + 6)
            });
            record(format!("{kind:?} shape {i}"), err)?;
        }
        for kind in [NormKind::Batch, NormKind::Instance, NormKind::Group] {
            let spec = NormSpec::new(kind, if c % 2 == 0 { 2 } else { 1 });
            let (gm, bt) = (randn([1, c, 1, 1], seed + 7), randn([1, c, 1, 1], seed + 8));
            let err = check(&[x.clone(), gm, bt], |t, v| {
                let (y, _) = t.normalize(v[0], v[1], v[2], &spec, Mode::Train, None)?;
                project(t, y, seed + 9)
            });
            record(format!("{kind} norm shape {i}"), err)?;
        }
        let mut r = gigan::rng::rng(seed);
        let target = Tensor::<f64>::from_fn(dims, |_| r.gen::<f64>());
        let err = check(std::slice::from_ref(&x), |t, v| {
            let tv = t.constant(&target);
            t.bce_with_logits(v[0], tv)
        });
        record(format!("bce shape {i}"), err)?;
        for red in [Reduction::Mean, Reduction::Sum] {
            let err = check(&[x.clone(), randn(dims, seed + 11)], |t, v| t.l1_loss(v[0], v[1], red));
            record(format!("l1 {red:?} shape {i}"), err)?;
        }
        let err = check(std::slice::from_ref(&x), |t, v| {
            let y = t.dropout(v[0], 0.3, Mode::Train, seed)?;
            project(t, y, seed + 12)
        });
        record(format!("dropout shape {i}"), err)?;
        let other = randn([dims[0], 1, dims[2], dims[3]], seed + 13);
        let err = check(&[x.clone(), other], |t, v| {
            let cat = t.concat(v[0], v[1])?;
            let s = t.scale(cat, -1.7);
            let sq = t.mul(s, cat)?;
            let a = t.add(sq, cat)?;
            let m = t.mean(a);
            let y = project(t, a, seed + 14)?;
            t.add(y, m)
        });
        record(format!("concat/scale/mul/add/mean shape {i}"), err)?;
    }
    let e2e = end_to_end_rel_err();
    ensure(e2e < 1e-3, || format!("end-to-end generator loss gradient rel err {e2e:.2e}"))?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 120.0, || format!("took {secs:.0} s"))?;
    Ok(format!(
        "{checks} op/shape checks, worst rel err {worst:.1e} (< 1e-4); end-to-end 16x16 {e2e:.1e} (< 1e-3); {secs:.1} s"
    ))
}

// ---------------------------------------------------------------- 2

fn plane_scene(albedo: f64, to_light: Vec3, intensity: f64) -> Scene {
    Scene {
        room: vec![Quad {
            origin: Vec3::new(-1000.0, -1000.0, 0.0),
            edge_u: Vec3::new(2000.0, 0.0, 0.0),
            edge_v: Vec3::new(0.0, 2000.0, 0.0),
            albedo: Vec3::splat(albedo),
        }],
        objects: vec![],
        light: DirectionalLight {
            direction: -to_light.normalized(),
            intensity: Vec3::splat(intensity),
        },
        camera: Camera {
            position: Vec3::new(0.0, 0.0, 2.0),
            pitch_deg: -60.0,
            yaw_deg: 30.0,
            vfov_deg: 40.0,
        },
        tessellation: Tessellation::default(),
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    // Lambert: albedo/pi * I * cos(theta).
    for (deg, albedo, want) in [(0.0f64, 1.0, 1.0), (60.0, 1.0, 0.5), (60.0, 0.5, 0.25), (120.0, 1.0, 0.0)] {
        let l = Vec3::new(deg.to_radians().sin(), 0.0, deg.to_radians().cos());
        let g = render::render_gbuffer(&plane_scene(albedo, l, PI), 8, 6).map_err(e)?;
        let err = g.direct.data.iter().map(|&v| (v as f64 - want).abs()).fold(0.0, f64::max);
        ensure(err < 1e-6, || format!("lambert {deg} deg albedo {albedo}: error {err:.2e}"))?;
    }
    let furnace_cfg = PTConfig {
        spp: 1024,
        max_bounces: 1,
        uniform_environment: Some(1.0),
        ..PTConfig::default()
    };
    let img = render::path_trace(&plane_scene(0.5, Vec3::Z, 0.0), &furnace_cfg, 8, 8).map_err(e)?;
    let furnace = img.data.iter().map(|&v| (v as f64 - 0.5).abs() / 0.5).fold(0.0, f64::max);
    ensure(furnace <= 0.01, || format!("furnace relative error {furnace:.4}"))?;

    let scene = generate_scene(5, &SceneConfig::default()).map_err(e)?;
    let g = render::render_gbuffer(&scene, 64, 32).map_err(e)?;
    let cfg = PTConfig {
        spp: 2,
        max_bounces: 0,
        ..PTConfig::default()
    };
    let p = render::path_trace(&scene, &cfg, 64, 32).map_err(e)?;
    let b0 = g.direct.data.iter().zip(&p.data).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    ensure(b0 <= 1e-5, || format!("bounce-0 vs g-buffer direct: {b0:.2e}"))?;

    let mut r = gigan::rng::rng(77);
    let mut pt = || Vec3::new(r.gen_range(-10.0..10.0), r.gen_range(-10.0..10.0), r.gen_range(-10.0..10.0));
    let tris: Vec<Triangle> = (0..10_000)
        .map(|_| {
            let a = pt();
            let (d1, d2) = (pt() * 0.06, pt() * 0.06);
            Triangle::flat(a, a + d1, a + d2, Vec3::ONE)
        })
        .collect();
    let bvh = build_bvh(&tris).map_err(e)?;
    let mut r = gigan::rng::rng(78);
    let mut hits = 0;
    for k in 0..1000 {
        let o = Vec3::new(r.gen_range(-12.0..12.0), r.gen_range(-12.0..12.0), r.gen_range(-12.0..12.0));
        let t = Vec3::new(r.gen_range(-6.0..6.0), r.gen_range(-6.0..6.0), r.gen_range(-6.0..6.0));
        let ray = Ray::new(o, (t - o).normalized());
        let (a, b) = (bvh.intersect(&tris, &ray, 0.0, f64::INFINITY), brute_force_intersect(&tris, &ray, 0.0, f64::INFINITY));
        ensure(a == b, || format!("ray {k}: bvh {a:?} vs brute force {b:?}"))?;
        hits += b.is_some() as usize;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 300.0, || format!("took {secs:.0} s"))?;
    Ok(format!(
        "lambert exact to 1e-6; furnace {:.3}% off at 1024 spp; bounce-0 max diff {b0:.1e}; bvh = brute force on 10k tris / 1k rays ({hits} hits); {secs:.1} s",
        furnace * 100.0
    ))
}

// ---------------------------------------------------------------- 3

fn random_image(w: usize, h: usize, seed: u64) -> Image {
    let mut r = gigan::rng::rng(seed);
    Image::from_data(w, h, 3, (0..w * h * 3).map(|_| r.gen::<f32>()).collect()).unwrap()
}

fn criterion_3() -> Outcome {
    let p = SsimParams::default();
    let x = random_image(48, 32, 1);
    ensure(metrics::ssim(&x, &x, &p).map_err(e)? == 1.0, || "ssim(x, x) != 1".into())?;
    let l1 = metrics::l1_metric(&x, &x).map_err(e)?;
    let l2 = metrics::l2_metric(&x, &x).map_err(e)?;
    ensure(l1 == 0.0 && l2 == 0.0, || format!("identity L1 {l1}, L2 {l2}"))?;
    let set: Vec<Image> = (0..6).map(|s| random_image(32, 32, 10 + s)).collect();
    let stats = metrics::extract_features(&set).map_err(e)?;
    let self_fid = metrics::fid(&stats, &stats).map_err(e)?;
    ensure(self_fid.abs() < 1e-9, || format!("fid(A, A) = {self_fid}"))?;

    let constant = |v: f32| Image::from_data(16, 16, 3, vec![v; 16 * 16 * 3]).unwrap();
    let c1 = p.c1();
    let want = (2.0 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
    let got = metrics::ssim(&constant(0.5), &constant(0.6), &p).map_err(e)?;
    ensure((got - want).abs() < 1e-6, || format!("constant ssim {got} vs {want}"))?;

    let d = 7;
    let id = DMatrix::<f64>::identity(d, d);
    let a = FeatureStats {
        mu: DVector::zeros(d),
        sigma: id.clone(),
    };
    let b = FeatureStats {
        mu: DVector::zeros(d),
        sigma: id * 4.0,
    };
    // tr(I + 4I - 2 sqrt(4I)) = d
    let scaled = metrics::fid(&a, &b).map_err(e)?;
    ensure((scaled - d as f64).abs() < 1e-6, || format!("sigma-scaling fid {scaled} vs {d}"))?;
    Ok(format!("identities exact; constant ssim {got:.6} (closed form {want:.6}); scaled-covariance fid {scaled:.9}"))
}

// ---------------------------------------------------------------- 4

fn cache_root() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn desk_data_config() -> GenConfig {
    GenConfig {
        count: 300,
        width: 128,
        height: 64,
        seed: 2024,
        previews: false,
        ..GenConfig::default()
    }
}

fn desk_train_config() -> TrainConfig {
    TrainConfig {
        lambda: 100.0,
        batch_size: 1,
        epochs: 200,
        seed: 7,
        generator: GeneratorConfig {
            depth: 5,
            base_channels: 64,
            norm: NormSpec::group(2),
            seed: 7,
            ..GeneratorConfig::default()
        },
        discriminator: DiscriminatorConfig {
            seed: 7,
            ..DiscriminatorConfig::default()
        },
        patience: Some(20),
        max_wall_seconds: Some(7.0 * 3600.0),
        ..TrainConfig::default()
    }
}

/// Generates once per config; a `complete` marker guards against half-written datasets.
fn cached_dataset(cfg: &GenConfig) -> Result<(PathBuf, bool), String> {
    let root = cache_root().join(format!("data-{}", &dataset::digest(cfg)[..16]));
    let marker = root.join("complete");
    if marker.exists() {
        return Ok((root, true));
    }
    let _ = std::fs::remove_dir_all(&root);
    let start = Instant::now();
    dataset::generate_dataset(&root, cfg, &|done, total| {
        if done % 10 == 0 || done == total {
            eprintln!("  rendered {done}/{total} ({:.0} s)", start.elapsed().as_secs_f64());
        }
    })
    .map_err(e)?;
    std::fs::write(&marker, b"").map_err(e)?;
    Ok((root, false))
}

fn criterion_4() -> Outcome {
    let data_cfg = desk_data_config();
    let (root, data_cached) = cached_dataset(&data_cfg)?;
    let items = io::load_dataset(&root).map_err(e)?;
    let cfg = desk_train_config();
    let split = split_dataset(items.len(), cfg.split, cfg.seed).map_err(e)?;
    let load = |idx: &[usize]| -> Result<Vec<_>, String> { idx.iter().map(|&i| dataset::load_sample(&root, &items[i]).map_err(e)).collect() };

    let run = cache_root().join(format!("run-{}-{}", &dataset::digest(&cfg)[..12], &dataset::digest(&data_cfg)[..12]));
    let done = run.join("complete");
    let latest = run.join("latest.gick");
    let mut state = if latest.exists() {
        io::load_checkpoint(&latest).map_err(e)?
    } else {
        TrainState::new(cfg.clone()).map_err(e)?
    };
    let resumed_from = state.epoch;
    let mut reason = None;
    if !done.exists() {
        let (train_set, val_set) = (load(&split.train)?, load(&split.val)?);
        eprintln!("  training from epoch {resumed_from} on {} items", train_set.len());
        let (_, r) = train::train(&mut state, &train_set, &val_set, Some(&run)).map_err(e)?;
        std::fs::write(&done, format!("{r:?}\n")).map_err(e)?;
        reason = Some(r);
    }
    let reason = match reason {
        Some(r) => format!("{r:?}"),
        None => std::fs::read_to_string(&done).map_err(e)?.trim().to_string() + ", cached",
    };
    let generator = state.best_generator();
    let timings = dataset::read_timings(&root).map_err(e)?;
    let test: Vec<_> = split
        .test
        .iter()
        .map(|&i| dataset::load_eval_item(&root, &items[i], timings.get(&items[i].id)).map_err(e))
        .collect::<Result<_, _>>()?;
    let report = train::evaluate(&generator, &test, 1).map_err(e)?;
    let _ = std::fs::write(run.join("test_metrics.txt"), report.to_table());
    let _ = std::fs::write(run.join("test_metrics.csv"), report.to_csv());
    for line in report.to_table().lines() {
        eprintln!("  {line}");
    }
    let (r, g) = (report.summary(Method::Raster), report.summary(Method::Gan));
    let checks = [
        ("L1", g.l1 <= 0.85 * r.l1, format!("{:.1} vs 0.85 x {:.1}", g.l1, r.l1)),
        ("L2", g.l2 <= 0.85 * r.l2, format!("{:.2} vs 0.85 x {:.2}", g.l2, r.l2)),
        ("SSIM", g.ssim >= r.ssim + 0.005, format!("{:.4} vs {:.4} + 0.005", g.ssim, r.ssim)),
        ("FID", g.fid <= r.fid, format!("{:.4} vs {:.4}", g.fid, r.fid)),
    ];
    let best = state.best.as_ref().map_or(0, |b| b.epoch);
    let summary = checks.iter().map(|(n, _, s)| format!("{n} {s}")).collect::<Vec<_>>().join("; ");
    let detail = format!(
        "{} test items, best epoch {best} of {} ({reason}{}); {summary}",
        test.len(),
        state.epoch,
        if data_cached { ", cached data" } else { "" }
    );
    match checks.iter().filter(|c| !c.1).map(|c| c.0).collect::<Vec<_>>() {
        failed if failed.is_empty() => Ok(detail),
        failed => Err(format!("GAN not better on {}: {detail}", failed.join(", "))),
    }
}

// ---------------------------------------------------------------- 5

fn criterion_5() -> Outcome {
    let data = desk_data_config();
    let g = Generator::<f32>::new(desk_train_config().generator).map_err(e)?;
    let (mut fast, mut slow) = (0.0, 0.0);
    let n = 3;
    for seed in 0..n {
        let scene = generate_scene(9000 + seed, &data.scene).map_err(e)?;
        let gb = time_op(3, || render::render_gbuffer(&scene, data.width, data.height).unwrap());
        let gbuf = render::render_gbuffer(&scene, data.width, data.height).map_err(e)?;
        let input = dataset::gbuffer_conditioning(&gbuf).map_err(e)?;
        let inf = time_op(3, || g.infer(&input).unwrap());
        let cfg = PTConfig {
            seed,
            ..data.path_tracer.clone()
        };
        let pt = time_op(1, || render::path_trace(&scene, &cfg, data.width, data.height).unwrap());
        fast += (gb.mean + inf.mean) / n as f64;
        slow += pt.mean / n as f64;
    }
    let ratio = slow / fast;
    let detail = format!(
        "g-buffer + inference {:.1} ms vs path trace {:.2} s at {} spp, {}x{}: {ratio:.0}x",
        fast * 1e3,
        slow,
        data.path_tracer.spp,
        data.width,
        data.height
    );
    if ratio >= 10.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- 6

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().unwrap() != dataset::TIMINGS_NAME {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

fn criterion_6() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let cfg = GenConfig {
        count: 6,
        width: 32,
        height: 16,
        seed: 31,
        scene: SceneConfig {
            min_objects: 10,
            max_objects: 20,
            ..SceneConfig::default()
        },
        path_tracer: PTConfig {
            spp: 8,
            ..PTConfig::default()
        },
        previews: true,
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    pool(1).install(|| dataset::generate_dataset(&a, &cfg, &|_, _| {})).map_err(e)?;
    pool(3).install(|| dataset::generate_dataset(&b, &cfg, &|_, _| {})).map_err(e)?;
    let (ta, tb) = (tree_bytes(&a), tree_bytes(&b));
    ensure(ta == tb, || "datasets from 1 and 3 workers differ".into())?;
    let files = ta.len();

    let items = io::load_dataset(&a).map_err(e)?;
    let samples: Vec<_> = items.iter().map(|it| dataset::load_sample(&a, it)).collect::<Result<_, _>>().map_err(e)?;
    let (train_set, val_set) = (&samples[..4], &samples[4..]);
    let tcfg = TrainConfig {
        epochs: 2,
        seed: 5,
        generator: GeneratorConfig {
            depth: 3,
            base_channels: 8,
            dropout: true,
            ..GeneratorConfig::default()
        },
        discriminator: DiscriminatorConfig {
            base_channels: 8,
            n_strided: 2,
            ..DiscriminatorConfig::default()
        },
        ..TrainConfig::default()
    };
    let full = pool(1).install(|| -> Result<_, String> {
        let mut s = TrainState::new(tcfg.clone()).map_err(e)?;
        train::train(&mut s, train_set, val_set, None).map_err(e)?;
        Ok(io::checkpoint::checkpoint_bytes(&s))
    })?;
    let run = dir.path().join("run");
    let resumed = pool(3).install(|| -> Result<_, String> {
        let mut s = TrainState::new(TrainConfig { epochs: 1, ..tcfg.clone() }).map_err(e)?;
        train::train(&mut s, train_set, val_set, Some(&run)).map_err(e)?;
        let mut s = io::load_checkpoint(&run.join("latest.gick")).map_err(e)?;
        s.config.epochs = 2;
        train::train(&mut s, train_set, val_set, Some(&run)).map_err(e)?;
        Ok(io::checkpoint::checkpoint_bytes(&s))
    })?;
    ensure(full == resumed, || "resumed training differs from uninterrupted training".into())?;
    let reloaded = io::load_checkpoint(&run.join("latest.gick")).map_err(e)?;
    ensure(io::checkpoint::checkpoint_bytes(&reloaded) == resumed, || "checkpoint load/save not byte-identical".into())?;
    Ok(format!(
        "{files} dataset files identical across 1/3 workers; resume after epoch 1 matches uninterrupted 2 epochs ({} checkpoint bytes)",
        full.len()
    ))
}

// ---------------------------------------------------------------- 7

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let cfg = GenConfig {
        count: 1,
        width: 128,
        height: 64,
        seed: 4242,
        previews: false,
        ..GenConfig::default()
    };
    let dir = tempfile::tempdir().map_err(e)?;
    let items = dataset::generate_dataset(dir.path(), &cfg, &|_, _| {}).map_err(e)?;
    let sample = dataset::load_sample(dir.path(), &items[0]).map_err(e)?;
    let target = train::to_unit_image(&sample.target).map_err(e)?;
    let tcfg = TrainConfig {
        epochs: 50,
        ..desk_train_config()
    };
    let mut state = TrainState::new(TrainConfig {
        patience: None,
        max_wall_seconds: None,
        ..tcfg
    })
    .map_err(e)?;
    let l1_now = |s: &TrainState| -> Result<f64, String> {
        let out = train::to_unit_image(&s.generator.infer(&sample.input).map_err(e)?).map_err(e)?;
        metrics::l1_metric(&out, &target).map_err(e)
    };
    let before = l1_now(&state)?;
    let (log, reason) = train::train(&mut state, std::slice::from_ref(&sample), &[], None).map_err(e)?;
    ensure(reason == StopReason::EpochLimit && log.steps.len() == 50, || format!("ran {} steps", log.steps.len()))?;
    let after = l1_now(&state)?;
    let secs = start.elapsed().as_secs_f64();
    let detail = format!("L1 {before:.1} -> {after:.1} ({:.1}% of step 0) in {secs:.0} s", 100.0 * after / before);
    ensure(secs < 600.0, || format!("too slow: {detail}"))?;
    if after < 0.1 * before {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ----------------------------------------------------------------

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 7] = [
        (1, "gradient suite", criterion_1),
        (2, "renderer correctness", criterion_2),
        (3, "metric identities", criterion_3),
        (4, "desk-scale ordering", criterion_4),
        (5, "timing ordering", criterion_5),
        (6, "determinism", criterion_6),
        (7, "overfit smoke test", criterion_7),
    ];
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {n} ({name}): PASS: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
