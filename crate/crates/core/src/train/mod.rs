//! Adversarial training loop, data split, logging and evaluation.

mod evaluate;
mod log;

pub use evaluate::{evaluate, EvalItem, ImageTranslator};
pub use log::{EpochRecord, StepRecord, TrainLog, STEP_HEADER, VAL_HEADER};

use crate::autodiff::{adam_step, AdamConfig, AdamState, Reduction, Tape, Tensor};
use crate::error::{Error, Result};
use crate::metrics::{l1_metric, ssim, SsimParams};
use crate::models::{Discriminator, DiscriminatorConfig, ForwardCtx, Generator, GeneratorConfig, ParamSet};
use crate::pixels::Image;
use crate::rng::{keyed, mix};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

/// Parameter-set ids on the tape.
pub const G_SET: u32 = 0;
pub const D_SET: u32 = 1;

const SPLIT_KEY: u64 = 0x5b17;
const EPOCH_KEY: u64 = 0xe90c;
const DROPOUT_KEY: u64 = 0xd50f;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Weight of the L1 term in the generator loss.
    pub lambda: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    /// Total epochs (a resumed run continues up to this count).
    pub epochs: u32,
    pub seed: u64,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    /// Save `latest` every this many epochs; 0 disables periodic checkpoints.
    pub checkpoint_every: u32,
    /// Stop after this many epochs without a validation-L1 improvement.
    pub patience: Option<u32>,
    /// Stop at the first epoch boundary after this much wall time.
    pub max_wall_seconds: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 100.0,
            adam: AdamConfig::default(),
            batch_size: 1,
            epochs: 200,
            seed: 0,
            split: [0.70, 0.15, 0.15],
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
            checkpoint_every: 1,
            patience: None,
            max_wall_seconds: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda {} must be >= 0", self.lambda)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        check_ratios(self.split)?;
        if !(self.adam.lr > 0.0) || !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(Error::Config("adam needs lr > 0 and betas in [0,1)".into()));
        }
        self.generator.validate()?;
        self.discriminator.validate()
    }
}

fn check_ratios(r: [f64; 3]) -> Result<()> {
    if r.iter().any(|v| !(*v >= 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {r:?} must be non-negative and sum to 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n` cut into `⌊r₀n⌋`, `⌊r₁n⌋` and the remainder.
pub fn split_dataset(n: usize, ratios: [f64; 3], seed: u64) -> Result<Split> {
    if n == 0 {
        return Err(Error::invalid("split_dataset", "empty dataset"));
    }
    check_ratios(ratios)?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut keyed(seed, SPLIT_KEY));
    let cut = |r: f64| ((r * n as f64) + 1e-9).floor() as usize;
    let (a, b) = (cut(ratios[0]), cut(ratios[1]));
    let test = idx.split_off(a + b);
    let val = idx.split_off(a);
    Ok(Split { train: idx, val, test })
}

/// Visiting order of `n` training items in `epoch`; depends only on `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: u32) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut keyed(mix(seed, EPOCH_KEY), epoch as u64));
    idx
}

/// One training pair in network range `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Sample {
    pub id: String,
    /// `(1, 12, H, W)` conditioning.
    pub input: Tensor<f32>,
    /// `(1, 3, H, W)` path-traced target.
    pub target: Tensor<f32>,
}

/// Best generator seen by validation.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub epoch: u32,
    pub val_l1: f64,
    pub params: ParamSet<f32>,
    pub buffers: ParamSet<f32>,
}

/// Everything needed to continue training bit-identically.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub generator: Generator<f32>,
    pub discriminator: Discriminator<f32>,
    pub g_adam: Vec<AdamState<f32>>,
    pub d_adam: Vec<AdamState<f32>>,
    /// Completed epochs.
    pub epoch: u32,
    /// Completed optimizer steps.
    pub step: u64,
    pub best: Option<Snapshot>,
    /// Epochs since `best` last improved.
    pub stale_epochs: u32,
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let generator = Generator::new(config.generator.clone())?;
        let discriminator = Discriminator::new(config.discriminator.clone())?;
        let g_adam = generator.params.iter().map(|p| AdamState::new(p.data.len())).collect();
        let d_adam = discriminator.params.iter().map(|p| AdamState::new(p.data.len())).collect();
        Ok(Self {
            config,
            generator,
            discriminator,
            g_adam,
            d_adam,
            epoch: 0,
            step: 0,
            best: None,
            stale_epochs: 0,
        })
    }

    /// The best validated generator, or the current one if validation never ran.
    pub fn best_generator(&self) -> Generator<f32> {
        let mut g = self.generator.clone();
        if let Some(b) = &self.best {
            g.params = b.params.clone();
            g.buffers = b.buffers.clone();
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub g_loss: f64,
    pub d_loss: f64,
    /// Unweighted mean absolute error between generated and target images.
    pub l1_term: f64,
}

fn adam_all(params: &mut ParamSet<f32>, states: &mut [AdamState<f32>], grads: Vec<Option<Vec<f32>>>, cfg: &AdamConfig) -> Result<()> {
    for (i, g) in grads.into_iter().enumerate() {
        let p = params.get_mut(i);
        let g = g.unwrap_or_else(|| vec![0.0; p.data.len()]);
        adam_step(&mut p.data, &g, &mut states[i], cfg).map_err(|e| match e {
            Error::NonFinite(_) => Error::NonFinite(format!("gradient of {}", p.name)),
            e => e,
        })?;
    }
    Ok(())
}

fn collect_grads(tape: &Tape<f32>, set: u32, n: usize) -> Vec<Option<Vec<f32>>> {
    let mut out = vec![None; n];
    for (i, g) in tape.param_grads(set) {
        out[i] = g.map(|g| g.to_vec());
    }
    out
}

/// Which optimizer updates [`train_step_phases`] applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Phases {
    pub discriminator: bool,
    pub generator: bool,
}

impl Phases {
    pub const BOTH: Phases = Phases {
        discriminator: true,
        generator: true,
    };
}

/// One discriminator step then one generator step on a batch.
pub fn train_step(state: &mut TrainState, input: &Tensor<f32>, target: &Tensor<f32>, dropout_seed: u64) -> Result<StepLosses> {
    train_step_phases(state, input, target, dropout_seed, Phases::BOTH)
}

/// [`train_step`] with either update switchable; losses are always computed.
pub fn train_step_phases(
    state: &mut TrainState,
    input: &Tensor<f32>,
    target: &Tensor<f32>,
    dropout_seed: u64,
    phases: Phases,
) -> Result<StepLosses> {
    let step = state.step;
    let lambda = state.config.lambda;
    let adam = state.config.adam;
    let ctx = ForwardCtx::train(dropout_seed);
    let mut tape = Tape::new();
    let x = tape.constant(input);
    let y = tape.constant(target);

    let g_vars = state.generator.params.register(&mut tape, Some(G_SET));
    let (fake, g_updates) = state.generator.forward_with(&mut tape, &g_vars, x, &ctx)?;
    let fake_detached = tape.detach(fake);

    // discriminator
    let d_vars = state.discriminator.params.register(&mut tape, Some(D_SET));
    let (real_logits, real_updates) = state.discriminator.forward_with(&mut tape, &d_vars, x, y, &ctx)?;
    let (fake_logits, fake_updates) = state.discriminator.forward_with(&mut tape, &d_vars, x, fake_detached, &ctx)?;
    let ones = tape.constant(&Tensor::full(tape.dims(real_logits), 1.0));
    let zeros = tape.constant(&Tensor::zeros(tape.dims(real_logits)));
    let real_loss = tape.bce_with_logits(real_logits, ones)?;
    let fake_loss = tape.bce_with_logits(fake_logits, zeros)?;
    let d_sum = tape.add(real_loss, fake_loss)?;
    let d_loss = tape.scale(d_sum, 0.5);
    let d_value = tape.scalar(d_loss) as f64;
    if !d_value.is_finite() {
        return Err(Error::Diverged {
            step,
            g_loss: f64::NAN,
            d_loss: d_value,
        });
    }
    if phases.discriminator {
        tape.backward(d_loss)?;
        let d_grads = collect_grads(&tape, D_SET, state.discriminator.params.len());
        adam_all(&mut state.discriminator.params, &mut state.d_adam, d_grads, &adam)?;
        state.discriminator.apply_stat_updates(&real_updates);
        state.discriminator.apply_stat_updates(&fake_updates);
    }

    // generator, against the updated discriminator
    let d_frozen = state.discriminator.params.register(&mut tape, None);
    let (logits, _) = state.discriminator.forward_with(&mut tape, &d_frozen, x, fake, &ctx)?;
    let ones = tape.constant(&Tensor::full(tape.dims(logits), 1.0));
    let adv = tape.bce_with_logits(logits, ones)?;
    let l1 = tape.l1_loss(fake, y, Reduction::Mean)?;
    let weighted = tape.scale(l1, lambda);
    let g_loss = tape.add(adv, weighted)?;
    let (g_value, l1_value) = (tape.scalar(g_loss) as f64, tape.scalar(l1) as f64);
    if !g_value.is_finite() {
        return Err(Error::Diverged {
            step,
            g_loss: g_value,
            d_loss: d_value,
        });
    }
    if phases.generator {
        tape.backward(g_loss)?;
        let g_grads = collect_grads(&tape, G_SET, state.generator.params.len());
        adam_all(&mut state.generator.params, &mut state.g_adam, g_grads, &adam)?;
        state.generator.apply_stat_updates(&g_updates);
    }

    Ok(StepLosses {
        g_loss: g_value,
        d_loss: d_value,
        l1_term: l1_value,
    })
}

/// Maps a network-range tensor item back to a `[0, 1]` image.
pub fn to_unit_image(t: &Tensor<f32>) -> Result<Image> {
    let mut img = Image::from_tensor(t)?;
    img.data.iter_mut().for_each(|v| *v = ((*v + 1.0) * 0.5).clamp(0.0, 1.0));
    Ok(img)
}

/// Mean per-image L1 (and SSIM when images are large enough) of the generator on `set`.
pub fn validate(generator: &Generator<f32>, set: &[Sample]) -> Result<(f64, Option<f64>)> {
    let params = SsimParams::default();
    let (mut l1, mut s, mut s_ok) = (0.0, 0.0, true);
    for item in set {
        let pred = to_unit_image(&generator.infer(&item.input)?)?;
        let truth = to_unit_image(&item.target)?;
        l1 += l1_metric(&pred, &truth)?;
        match ssim(&pred, &truth, &params) {
            Ok(v) => s += v,
            Err(_) => s_ok = false,
        }
    }
    let n = set.len().max(1) as f64;
    Ok((l1 / n, s_ok.then_some(s / n)))
}

/// Why [`train`] returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EpochLimit,
    EarlyStop,
    WallClock,
}

/// Runs epochs until `config.epochs`, early stopping or the wall-clock budget.
///
/// With `out_dir`, appends `train_log.csv`/`val_log.csv` and writes `latest.gick`
/// (every `checkpoint_every` epochs) and `best.gick` (on validation improvement).
pub fn train(
    state: &mut TrainState,
    train_set: &[Sample],
    val_set: &[Sample],
    out_dir: Option<&Path>,
) -> Result<(TrainLog, StopReason)> {
    if train_set.is_empty() {
        return Err(Error::invalid("train", "empty training split"));
    }
    let dims = train_set[0].input.dims();
    state.generator.check_input(dims)?;
    let start = Instant::now();
    let mut log = TrainLog::default();
    let mut writer = out_dir.map(log::LogWriter::open).transpose()?;
    let cfg = state.config.clone();
    let mut reason = StopReason::EpochLimit;
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let order = epoch_order(train_set.len(), cfg.seed, epoch);
        for chunk in order.chunks(cfg.batch_size) {
            let inputs: Vec<&Tensor<f32>> = chunk.iter().map(|&i| &train_set[i].input).collect();
            let targets: Vec<&Tensor<f32>> = chunk.iter().map(|&i| &train_set[i].target).collect();
            let (x, y) = if chunk.len() == 1 {
                (inputs[0].clone(), targets[0].clone())
            } else {
                (Tensor::stack(&inputs)?, Tensor::stack(&targets)?)
            };
            let dropout_seed = mix(mix(cfg.seed, DROPOUT_KEY), state.step);
            let losses = train_step(state, &x, &y, dropout_seed)?;
            state.step += 1;
            let rec = StepRecord {
                step: state.step,
                g_loss: losses.g_loss,
                d_loss: losses.d_loss,
                l1_term: losses.l1_term,
                epoch: epoch + 1,
                wall_ms: start.elapsed().as_millis() as u64,
            };
            if let Some(w) = writer.as_mut() {
                w.step(&rec)?;
            }
            log.steps.push(rec);
        }
        state.epoch += 1;

        let mut improved = false;
        if !val_set.is_empty() {
            let (val_l1, val_ssim) = validate(&state.generator, val_set)?;
            improved = state.best.as_ref().is_none_or(|b| val_l1 < b.val_l1);
            if improved {
                state.best = Some(Snapshot {
                    epoch: state.epoch,
                    val_l1,
                    params: state.generator.params.clone(),
                    buffers: state.generator.buffers.clone(),
                });
                state.stale_epochs = 0;
            } else {
                state.stale_epochs += 1;
            }
            let rec = EpochRecord {
                epoch: state.epoch,
                val_l1,
                val_ssim,
                wall_ms: start.elapsed().as_millis() as u64,
            };
            if let Some(w) = writer.as_mut() {
                w.epoch(&rec)?;
            }
            log.epochs.push(rec);
        }
        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && state.epoch.is_multiple_of(cfg.checkpoint_every) {
                crate::io::save_checkpoint(&dir.join("latest.gick"), state)?;
            }
            if improved {
                crate::io::save_checkpoint(&dir.join("best.gick"), state)?;
            }
        }
        if cfg.patience.is_some_and(|p| state.stale_epochs >= p) {
            reason = StopReason::EarlyStop;
            break;
        }
        if cfg.max_wall_seconds.is_some_and(|s| start.elapsed().as_secs_f64() >= s) {
            reason = StopReason::WallClock;
            break;
        }
    }
    if let Some(dir) = out_dir {
        crate::io::save_checkpoint(&dir.join("latest.gick"), state)?;
    }
    Ok((log, reason))
}

#[cfg(test)]
mod tests;
