//! Run configuration: defaults, then a TOML file, then command-line flags.

use crate::autodiff::NormKind;
use crate::dataset::GenConfig;
use crate::error::{Error, Result};
use crate::train::TrainConfig;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Timed inference runs per item, after one warm-up.
    pub timing_reps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { timing_reps: 3 }
    }
}

/// Everything a subcommand reads besides its input paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: GenConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    /// Desk-scale defaults: a 128x64 dataset needs a generator no deeper than 6.
    fn default() -> Self {
        let mut train = TrainConfig::default();
        train.generator.depth = 5;
        Self {
            data: GenConfig::default(),
            train,
            eval: EvalConfig::default(),
        }
    }
}

/// Flag values that override the file; `None` leaves the field alone.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub count: Option<usize>,
    pub res: Option<(usize, usize)>,
    pub spp: Option<u32>,
    pub epochs: Option<u32>,
    pub lambda: Option<f64>,
    pub norm: Option<NormKind>,
    pub groups: Option<usize>,
    pub depth: Option<usize>,
}

impl RunConfig {
    /// Reads a config file. A run manifest written by a previous run is accepted too.
    pub fn from_toml(path: &Path, text: &str) -> Result<Self> {
        let bad = |e: toml::de::Error| Error::Config(format!("{}: {}", path.display(), e.message()));
        let value: toml::Table = toml::from_str(text).map_err(bad)?;
        let table = match (value.get("command"), value.get("config")) {
            (Some(_), Some(toml::Value::Table(cfg))) => cfg.clone(),
            _ => value,
        };
        table.try_into().map_err(bad)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.data.seed = s;
            self.train.seed = s;
            self.train.generator.seed = s;
            self.train.discriminator.seed = s;
        }
        if let Some(c) = o.count {
            self.data.count = c;
        }
        if let Some((w, h)) = o.res {
            self.data.width = w;
            self.data.height = h;
        }
        if let Some(s) = o.spp {
            self.data.path_tracer.spp = s;
        }
        if let Some(e) = o.epochs {
            self.train.epochs = e;
        }
        if let Some(l) = o.lambda {
            self.train.lambda = l;
        }
        for norm in [&mut self.train.generator.norm, &mut self.train.discriminator.norm] {
            if let Some(k) = o.norm {
                norm.kind = k;
            }
            if let Some(g) = o.groups {
                norm.groups = g;
            }
        }
        if let Some(d) = o.depth {
            self.train.generator.depth = d;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate().map_err(as_config)?;
        self.train.validate().map_err(as_config)?;
        if self.eval.timing_reps == 0 {
            return Err(Error::Config("eval.timing_reps must be >= 1".into()));
        }
        let seeds = [
            ("data.seed", self.data.seed),
            ("data.path_tracer.seed", self.data.path_tracer.seed),
            ("train.seed", self.train.seed),
            ("train.generator.seed", self.train.generator.seed),
            ("train.discriminator.seed", self.train.discriminator.seed),
        ];
        for (name, s) in seeds {
            if s > i64::MAX as u64 {
                return Err(Error::Config(format!("{name} {s} does not fit in a signed 64-bit TOML integer")));
            }
        }
        Ok(())
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::InvalidArgument { op, msg } => Error::Config(format!("{op}: {msg}")),
        e => e,
    }
}

/// The effective configuration of one invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Input paths, keyed by flag name.
    pub inputs: BTreeMap<String, String>,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn file_name(command: &str) -> String {
        format!("run-{command}.toml")
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        crate::io::write_atomic(&dir.join(Self::file_name(&self.command)), text.as_bytes())
    }
}

/// Parses `WxH`.
pub fn parse_res(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("`{s}` is not WxH"))?;
    let p = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("`{s}`: {e}"));
    let (w, h) = (p(w)?, p(h)?);
    if w == 0 || h == 0 {
        return Err(format!("`{s}` has a zero side"));
    }
    Ok((w, h))
}
