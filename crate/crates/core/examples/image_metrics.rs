//! Score rasterized direct light against path-traced references with L1, L2, SSIM and FID.
//!
//! cargo run --release --example image_metrics -- [scenes]

use gigan::metrics::{extract_features, fid, l1_metric, l2_metric, ssim, SsimParams};
use gigan::render::{path_trace_with, render_gbuffer_with, Geometry, PTConfig};
use gigan::scene::{generate_scene, SceneConfig};

fn main() -> gigan::Result<()> {
    let n: u64 = std::env::args().nth(1).map(|a| a.parse().expect("scene count")).unwrap_or(4);
    let (w, h) = (64, 32);
    let cfg = PTConfig {
        spp: 64,
        ..PTConfig::default()
    };
    let (mut raster, mut truth) = (Vec::new(), Vec::new());
    for seed in 0..n {
        let scene = generate_scene(seed, &SceneConfig::default())?;
        let geom = Geometry::from_scene(&scene)?;
        let direct = render_gbuffer_with(&geom, &scene, w, h)?.direct;
        let target = path_trace_with(&geom, &scene, &cfg, w, h)?.clamped01();
        println!(
            "scene {seed}: L1 {:.1}, L2 {:.2}, SSIM {:.4}",
            l1_metric(&direct, &target)?,
            l2_metric(&direct, &target)?,
            ssim(&direct, &target, &SsimParams::default())?
        );
        raster.push(direct);
        truth.push(target);
    }
    let (a, b) = (extract_features(&raster)?, extract_features(&truth)?);
    println!("FID raster vs path traced: {:.4}; path traced vs itself: {:.4}", fid(&a, &b)?, fid(&b, &b)?);
    Ok(())
}
