//! Generate a random room, render its G-buffer and a path-traced reference.
//!
//! cargo run --release --example render_scene -- [seed] [width] [height] [spp]

use gigan::render::{path_trace_with, render_gbuffer_with, Geometry, PTConfig};
use gigan::scene::{generate_scene, SceneConfig};
use std::time::Instant;

fn main() -> gigan::Result<()> {
    let args: Vec<u64> = std::env::args().skip(1).map(|a| a.parse().expect("numeric argument")).collect();
    let arg = |i: usize, d: u64| args.get(i).copied().unwrap_or(d);
    let (seed, w, h, spp) = (arg(0, 1), arg(1, 128) as usize, arg(2, 64) as usize, arg(3, 64) as u32);

    let scene = generate_scene(seed, &SceneConfig::default())?;
    let t = Instant::now();
    let geom = Geometry::from_scene(&scene)?;
    println!("{} objects, {} triangles, bvh {:.1} ms", scene.objects.len(), geom.triangles.len(), t.elapsed().as_secs_f64() * 1e3);

    let t = Instant::now();
    let g = render_gbuffer_with(&geom, &scene, w, h)?;
    println!("g-buffer {w}x{h}: {:.1} ms, mean direct {:.4}", t.elapsed().as_secs_f64() * 1e3, g.direct.mean());

    let cfg = PTConfig { spp, seed, ..PTConfig::default() };
    let t = Instant::now();
    let img = path_trace_with(&geom, &scene, &cfg, w, h)?;
    println!("path trace {spp} spp: {:.2} s, mean radiance {:.4}", t.elapsed().as_secs_f64(), img.mean());
    Ok(())
}
