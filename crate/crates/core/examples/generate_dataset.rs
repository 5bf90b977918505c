//! Render a small dataset to disk and read it back.
//!
//! cargo run --release --example generate_dataset -- [out_dir] [count]

use gigan::dataset::{generate_dataset, load_sample, read_timings, GenConfig};
use gigan::io::load_dataset;
use gigan::render::PTConfig;
use std::path::PathBuf;

fn main() -> gigan::Result<()> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().unwrap_or_else(|| "example-data".into()));
    let count = args.next().map(|c| c.parse().expect("count")).unwrap_or(4);
    let cfg = GenConfig {
        count,
        width: 64,
        height: 32,
        seed: 11,
        path_tracer: PTConfig {
            spp: 32,
            ..PTConfig::default()
        },
        ..GenConfig::default()
    };
    generate_dataset(&root, &cfg, &|done, total| eprintln!("rendered {done}/{total}"))?;

    let items = load_dataset(&root)?;
    let timings = read_timings(&root)?;
    for item in &items {
        let s = load_sample(&root, item)?;
        let t = &timings[&item.id];
        println!(
            "{}: scene seed {}, input {:?}, g-buffer {:.1} ms, path trace {:.2} s",
            item.id,
            item.seed,
            s.input.dims(),
            t.gbuffer_seconds * 1e3,
            t.path_trace_seconds
        );
    }
    println!("previews in {}", root.join("previews").display());
    Ok(())
}
