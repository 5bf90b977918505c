//! Draw a loss plot from a training log, or from a synthetic one.
//!
//! cargo run --release --example plot_losses -- [train_log.csv] [out.png]

use gigan::cli::plot::write_loss_plot;
use gigan::train::{StepRecord, TrainLog};
use std::path::PathBuf;

fn main() -> gigan::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = match args.next() {
        Some(log) => TrainLog::read_steps(&PathBuf::from(log))?,
        None => (1..=400u64)
            .map(|s| {
                let t = s as f64;
                StepRecord {
                    step: s,
                    g_loss: 2.0 + 40.0 * (-t / 80.0).exp() + 0.8 * (t * 0.7).sin(),
                    d_loss: 0.69 - 0.2 * (1.0 - (-t / 150.0).exp()) + 0.05 * (t * 1.3).cos(),
                    l1_term: 0.0,
                    epoch: 1 + s as u32 / 100,
                    wall_ms: 0,
                }
            })
            .collect(),
    };
    let out = PathBuf::from(args.next().unwrap_or_else(|| "loss.png".into()));
    write_loss_plot(&steps, &out)?;
    println!("{} steps plotted to {}", steps.len(), out.display());
    Ok(())
}
