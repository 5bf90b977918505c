//! The `gigan` command line: dataset generation, training, evaluation, inference and plots.

mod config;
pub mod plot;

pub use config::{parse_res, EvalConfig, Overrides, RunConfig, RunManifest};

use crate::autodiff::NormKind;
use crate::dataset::{self, GenConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::time_op;
use crate::pixels::Image;
use crate::render::render_gbuffer;
use crate::scene::generate_scene;
use crate::train::{self, evaluate, split_dataset, to_unit_image, ImageTranslator, TrainState};
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "GIGAN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "gigan", version, about = "G-buffer to global illumination with a conditional GAN")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Args, Default)]
pub struct Flags {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for scenes, splits, shuffling and weight init.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of scenes to generate.
    #[arg(long, global = true)]
    pub count: Option<usize>,
    /// Resolution as WxH.
    #[arg(long, global = true, value_parser = parse_res)]
    pub res: Option<(usize, usize)>,
    /// Path-tracer samples per pixel.
    #[arg(long, global = true)]
    pub spp: Option<u32>,
    #[arg(long, global = true)]
    pub epochs: Option<u32>,
    /// Weight of the L1 term.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub norm: Option<NormArg>,
    /// Group count for group normalization.
    #[arg(long, global = true)]
    pub groups: Option<usize>,
    /// Generator depth (stride-2 encoder steps).
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Output directory (the PNG path for plot-loss).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    Batch,
    Instance,
    Group,
}

impl From<NormArg> for NormKind {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Batch => NormKind::Batch,
            NormArg::Instance => NormKind::Instance,
            NormArg::Group => NormKind::Group,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render scenes into G-buffer and path-traced tensor sets.
    GenData,
    /// Train on a dataset; resumes from a checkpoint if given.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score raster, GAN and path-traced images on a split.
    Eval(EvalArgs),
    /// Eval plus raster | GAN | path-traced preview strips.
    Compare(EvalArgs),
    /// Translate one G-buffer set, from a dataset item or a freshly rendered scene.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, requires = "item")]
        data: Option<PathBuf>,
        #[arg(long, requires = "data")]
        item: Option<String>,
        /// Render scene `SEED` at --res instead of reading a dataset item.
        #[arg(long, conflicts_with = "data")]
        scene: Option<u64>,
    },
    /// Plot generator and discriminator loss from a training log.
    PlotLoss { log: PathBuf },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::Train { .. } => "train",
            Command::Eval(_) => "eval",
            Command::Compare(_) => "compare",
            Command::Infer { .. } => "infer",
            Command::PlotLoss { .. } => "plot-loss",
        }
    }
}

impl Flags {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            count: self.count,
            res: self.res,
            spp: self.spp,
            epochs: self.epochs,
            lambda: self.lambda,
            norm: self.norm.map(Into::into),
            groups: self.groups,
            depth: self.depth,
        }
    }

    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                RunConfig::from_toml(p, &text)?
            }
            None => RunConfig::default(),
        };
        cfg.apply(&self.overrides());
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Worker cap from the environment, if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV}={v} is not a positive integer"))),
        },
    }
}

/// Parses `args`, runs the subcommand and returns the process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = thread_cap()? {
        // Fails only if the pool is already built, e.g. by an earlier call in the same process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let cfg = cli.flags.resolve()?;
    let out = cli.flags.out.clone();
    let dir = |default: &str| out.clone().unwrap_or_else(|| PathBuf::from(default));
    let mut inputs = BTreeMap::new();
    let manifest = |dir: &Path, inputs: &BTreeMap<String, String>, config: &RunConfig| {
        RunManifest {
            command: cli.command.name().to_string(),
            inputs: inputs.clone(),
            config: config.clone(),
        }
        .write(dir)
    };
    match &cli.command {
        Command::GenData => {
            let root = dir("data");
            manifest(&root, &inputs, &cfg)?;
            gen_data(&root, &cfg.data)
        }
        Command::Train { data, resume } => {
            let run_dir = dir("run");
            inputs.insert("data".into(), data.display().to_string());
            if let Some(r) = resume {
                inputs.insert("resume".into(), r.display().to_string());
            }
            train_cmd(&run_dir, data, resume.as_deref(), cfg, |c| manifest(&run_dir, &inputs, c))
        }
        Command::Eval(a) | Command::Compare(a) => {
            let eval_dir = dir("eval");
            inputs.insert("checkpoint".into(), a.checkpoint.display().to_string());
            inputs.insert("data".into(), a.data.display().to_string());
            inputs.insert("split".into(), format!("{:?}", a.split).to_lowercase());
            manifest(&eval_dir, &inputs, &cfg)?;
            eval_cmd(&eval_dir, a, &cfg, matches!(cli.command, Command::Compare(_)))
        }
        Command::Infer {
            checkpoint,
            data,
            item,
            scene,
        } => {
            let infer_dir = dir("infer");
            inputs.insert("checkpoint".into(), checkpoint.display().to_string());
            match (data, item, scene) {
                (Some(d), Some(i), None) => {
                    inputs.insert("data".into(), d.display().to_string());
                    inputs.insert("item".into(), i.clone());
                }
                (None, None, Some(s)) => {
                    inputs.insert("scene".into(), s.to_string());
                }
                _ => return Err(Error::Config("infer needs either --data with --item, or --scene".into())),
            }
            manifest(&infer_dir, &inputs, &cfg)?;
            let source = match (data, item) {
                (Some(d), Some(i)) => InferSource::Item(d, i),
                _ => InferSource::Scene(scene.expect("checked above")),
            };
            infer_cmd(&infer_dir, checkpoint, source, &cfg).map(|_| ())
        }
        Command::PlotLoss { log } => {
            let png = out.unwrap_or_else(|| log.with_file_name("loss.png"));
            inputs.insert("log".into(), log.display().to_string());
            let parent = png.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            manifest(parent, &inputs, &cfg)?;
            let steps = train::TrainLog::read_steps(log)?;
            if steps.len() < 2 {
                return Err(Error::Parse {
                    path: log.clone(),
                    line: steps.len() + 2,
                    msg: format!("need at least 2 rows, found {}", steps.len()),
                });
            }
            plot::write_loss_plot(&steps, &png)?;
            println!("wrote {}", png.display());
            Ok(())
        }
    }
}

pub fn gen_data(root: &Path, cfg: &GenConfig) -> Result<()> {
    let start = Instant::now();
    let items = dataset::generate_dataset(root, cfg, &|done, total| eprintln!("rendered {done}/{total}"))?;
    println!(
        "wrote {} items ({}x{}, {} spp) to {} in {:.1} s",
        items.len(),
        cfg.width,
        cfg.height,
        cfg.path_tracer.spp,
        root.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn train_cmd(
    run_dir: &Path,
    data: &Path,
    resume: Option<&Path>,
    mut cfg: RunConfig,
    write_manifest: impl FnOnce(&RunConfig) -> Result<()>,
) -> Result<()> {
    let mut state = match resume {
        Some(p) => {
            let mut s = io::load_checkpoint_matching(p, &cfg.train.generator, &cfg.train.discriminator)?;
            s.config.epochs = cfg.train.epochs;
            s.config.patience = cfg.train.patience;
            s.config.max_wall_seconds = cfg.train.max_wall_seconds;
            s.config.checkpoint_every = cfg.train.checkpoint_every;
            cfg.train = s.config.clone();
            s
        }
        None => TrainState::new(cfg.train.clone())?,
    };
    write_manifest(&cfg)?;
    let items = io::load_dataset(data)?;
    let split = split_dataset(items.len(), cfg.train.split, cfg.train.seed)?;
    let load = |idx: &[usize]| -> Result<Vec<_>> { idx.iter().map(|&i| dataset::load_sample(data, &items[i])).collect() };
    let (train_set, val_set) = (load(&split.train)?, load(&split.val)?);
    eprintln!(
        "training on {} items, validating on {}, from epoch {}",
        train_set.len(),
        val_set.len(),
        state.epoch
    );
    let (log, reason) = train::train(&mut state, &train_set, &val_set, Some(run_dir))?;
    println!(
        "stopped ({reason:?}) after epoch {} / step {}; {} steps this run",
        state.epoch,
        state.step,
        log.steps.len()
    );
    if let Some(b) = &state.best {
        println!("best validation L1 {:.6} at epoch {}", b.val_l1, b.epoch);
    }
    Ok(())
}

fn eval_cmd(out: &Path, a: &EvalArgs, cfg: &RunConfig, strips: bool) -> Result<()> {
    let state = io::load_checkpoint(&a.checkpoint)?;
    let generator = state.best_generator();
    let items = io::load_dataset(&a.data)?;
    let split = split_dataset(items.len(), state.config.split, state.config.seed)?;
    let idx: Vec<usize> = match a.split {
        SplitArg::Train => split.train,
        SplitArg::Val => split.val,
        SplitArg::Test => split.test,
        SplitArg::All => (0..items.len()).collect(),
    };
    let timings = dataset::read_timings(&a.data)?;
    let eval_items = idx
        .iter()
        .map(|&i| dataset::load_eval_item(&a.data, &items[i], timings.get(&items[i].id)))
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&generator, &eval_items, cfg.eval.timing_reps)?;
    io::write_atomic(&out.join("metrics.csv"), report.to_csv().as_bytes())?;
    let table = report.to_table();
    io::write_atomic(&out.join("metrics.txt"), table.as_bytes())?;
    print!("{table}");
    if strips {
        let dir = out.join("compare");
        for it in &eval_items {
            let gan = to_unit_image(&generator.translate(&it.input)?)?;
            let img = plot::strip(&[("RASTER", &it.direct.clamped01()), ("GAN", &gan), ("TRACED", &it.target.clamped01())])?;
            io::write_atomic(&dir.join(format!("{}.png", it.id)), &plot::png_bytes(&img)?)?;
        }
        println!("wrote {} strips to {}", eval_items.len(), dir.display());
    }
    Ok(())
}

pub enum InferSource<'a> {
    Item(&'a Path, &'a str),
    Scene(u64),
}

/// Result of translating one input set.
#[derive(Debug, Clone)]
pub struct InferOutput {
    pub name: String,
    pub image: Image,
    pub gbuffer_seconds: Option<f64>,
    pub inference_seconds: f64,
}

pub fn infer_cmd(out: &Path, checkpoint: &Path, source: InferSource, cfg: &RunConfig) -> Result<InferOutput> {
    let generator = io::load_checkpoint(checkpoint)?.best_generator();
    let (name, input, gbuffer_seconds) = match source {
        InferSource::Item(root, id) => {
            let items = io::load_dataset(root)?;
            let item = items
                .iter()
                .find(|i| i.id == id)
                .ok_or_else(|| Error::Item {
                    id: id.to_string(),
                    msg: format!("not in {}", root.display()),
                })?;
            (id.to_string(), dataset::load_sample(root, item)?.input, None)
        }
        InferSource::Scene(seed) => {
            let scene = generate_scene(seed, &cfg.data.scene)?;
            let start = Instant::now();
            let g = render_gbuffer(&scene, cfg.data.width, cfg.data.height)?;
            let t = start.elapsed().as_secs_f64();
            (format!("scene{seed}"), dataset::gbuffer_conditioning(&g)?, Some(t))
        }
    };
    let image = to_unit_image(&generator.translate(&input)?)?;
    let timing = time_op(cfg.eval.timing_reps, || generator.translate(&input));
    io::write_image(&out.join(format!("{name}.gitf")), &image)?;
    io::write_png(&out.join(format!("{name}.png")), &image)?;
    match gbuffer_seconds {
        Some(g) => println!(
            "{name}: g-buffer {:.2} ms + inference {:.2} ms = {:.2} ms",
            g * 1e3,
            timing.mean * 1e3,
            (g + timing.mean) * 1e3
        ),
        None => println!("{name}: inference {:.2} ms (std {:.2} ms)", timing.mean * 1e3, timing.std * 1e3),
    }
    Ok(InferOutput {
        name,
        image,
        gbuffer_seconds,
        inference_seconds: timing.mean,
    })
}
