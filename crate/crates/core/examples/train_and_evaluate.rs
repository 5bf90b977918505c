//! Train a small generator on a freshly rendered dataset and print the comparison table.
//!
//! cargo run --release --example train_and_evaluate -- [epochs]

use gigan::dataset::{generate_dataset, load_eval_item, load_sample, read_timings, GenConfig};
use gigan::models::{DiscriminatorConfig, GeneratorConfig};
use gigan::render::PTConfig;
use gigan::scene::SceneConfig;
use gigan::train::{evaluate, split_dataset, train, TrainConfig, TrainState};

fn main() -> gigan::Result<()> {
    let epochs = std::env::args().nth(1).map(|e| e.parse().expect("epochs")).unwrap_or(5);
    let dir = std::env::temp_dir().join("gigan-train-example");
    let gen = GenConfig {
        count: 20,
        width: 64,
        height: 32,
        seed: 3,
        scene: SceneConfig {
            min_objects: 20,
            max_objects: 60,
            ..SceneConfig::default()
        },
        path_tracer: PTConfig {
            spp: 32,
            ..PTConfig::default()
        },
        previews: false,
    };
    let data = dir.join("data");
    generate_dataset(&data, &gen, &|_, _| {})?;
    let items = gigan::io::load_dataset(&data)?;

    let cfg = TrainConfig {
        epochs,
        generator: GeneratorConfig {
            depth: 4,
            base_channels: 16,
            ..GeneratorConfig::default()
        },
        discriminator: DiscriminatorConfig {
            base_channels: 16,
            n_strided: 2,
            ..DiscriminatorConfig::default()
        },
        ..TrainConfig::default()
    };
    let split = split_dataset(items.len(), cfg.split, cfg.seed)?;
    let load = |idx: &[usize]| idx.iter().map(|&i| load_sample(&data, &items[i])).collect::<gigan::Result<Vec<_>>>();
    let mut state = TrainState::new(cfg)?;
    let (log, reason) = train(&mut state, &load(&split.train)?, &load(&split.val)?, Some(&dir.join("run")))?;
    for e in &log.epochs {
        println!("epoch {:>3}: validation L1 {:.4}", e.epoch, e.val_l1);
    }
    println!("stopped: {reason:?}, {} steps, logs in {}", log.steps.len(), dir.join("run").display());

    let timings = read_timings(&data)?;
    let test = split
        .test
        .iter()
        .map(|&i| load_eval_item(&data, &items[i], timings.get(&items[i].id)))
        .collect::<gigan::Result<Vec<_>>>()?;
    print!("{}", evaluate(&state.best_generator(), &test, 3)?.to_table());
    Ok(())
}
