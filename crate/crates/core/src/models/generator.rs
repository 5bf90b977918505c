use super::{
    apply_updates, conv_fwd, conv_t_fwd, norm_fwd, Builder, ConvLayer, ForwardCtx, NormLayer, ParamSet, StatUpdates,
    CONDITION_CHANNELS, IMAGE_CHANNELS,
};
use crate::autodiff::{Activation, NormSpec, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// Number of stride-2 encoder steps.
    pub depth: usize,
    pub base_channels: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub norm: NormSpec,
    /// Dropout with p = 0.5 on the three innermost decoder blocks.
    pub dropout: bool,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            depth: 8,
            base_channels: 64,
            in_channels: CONDITION_CHANNELS,
            out_channels: IMAGE_CHANNELS,
            norm: NormSpec::group(2),
            dropout: false,
            seed: 0,
        }
    }
}

impl GeneratorConfig {
    /// Channels of encoder level `i` (1-based).
    pub fn channels(&self, i: usize) -> usize {
        (self.base_channels << (i - 1).min(3)).min(8 * self.base_channels)
    }

    /// Required divisor of input height and width.
    pub fn divisor(&self) -> usize {
        1 << self.depth
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 16 {
            return Err(Error::Config(format!("generator depth {} outside 1..=16", self.depth)));
        }
        if self.base_channels == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Config("generator channel counts must be positive".into()));
        }
        for i in 1..=self.depth {
            self.norm
                .validate(self.channels(i))
                .map_err(|e| Error::Config(format!("generator level {i}: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Down {
    conv: ConvLayer,
    norm: Option<usize>,
}

#[derive(Debug, Clone)]
struct Up {
    conv: ConvLayer,
    norm: usize,
    dropout: bool,
}

/// U-Net: `depth` strided conv steps down, mirrored transpose-conv steps up with skip concatenation.
#[derive(Debug, Clone)]
pub struct Generator<T = f32> {
    pub config: GeneratorConfig,
    pub params: ParamSet<T>,
    /// Running statistics of batch-norm layers.
    pub buffers: ParamSet<T>,
    norms: Vec<NormLayer>,
    down: Vec<Down>,
    /// Innermost first; the last entry is the output layer.
    up: Vec<Up>,
    out: ConvLayer,
}

impl<T: Scalar> Generator<T> {
    pub fn new(config: GeneratorConfig) -> Result<Self> {
        config.validate()?;
        let (mut params, mut buffers) = (ParamSet::new(), ParamSet::new());
        let mut norms = Vec::new();
        let mut down = Vec::new();
        let mut up = Vec::new();
        let out;
        {
            let mut b = Builder {
                params: &mut params,
                buffers: &mut buffers,
                rng: crate::rng::keyed(config.seed, 0x6e6e),
            };
            let d = config.depth;
            for i in 1..=d {
                let cin = if i == 1 { config.in_channels } else { config.channels(i - 1) };
                let cout = config.channels(i);
                let conv = b.conv(&format!("down{i}.conv"), cout, cin, cout, 2, 1);
                let norm = if i == 1 {
                    None
                } else {
                    norms.push(b.norm(&format!("down{i}.norm"), config.norm, cout)?);
                    Some(norms.len() - 1)
                };
                down.push(Down { conv, norm });
            }
            for i in (1..d).rev() {
                let cin = if i == d - 1 { config.channels(d) } else { 2 * config.channels(i + 1) };
                let cout = config.channels(i);
                let conv = b.conv(&format!("up{i}.conv"), cin, cout, cout, 2, 1);
                norms.push(b.norm(&format!("up{i}.norm"), config.norm, cout)?);
                up.push(Up {
                    conv,
                    norm: norms.len() - 1,
                    dropout: config.dropout && up.len() < 3,
                });
            }
            let cin = if d == 1 { config.channels(1) } else { 2 * config.channels(1) };
            out = b.conv("out.conv", cin, config.out_channels, config.out_channels, 2, 1);
        }
        Ok(Self {
            config,
            params,
            buffers,
            norms,
            down,
            up,
            out,
        })
    }

    pub fn check_input(&self, dims: [usize; 4]) -> Result<()> {
        let k = self.config.divisor();
        if dims[1] != self.config.in_channels {
            return Err(Error::shape("generator input channels", dims, self.config.in_channels));
        }
        if !dims[2].is_multiple_of(k) || !dims[3].is_multiple_of(k) {
            return Err(Error::invalid(
                "generator",
                format!("input {}x{} (HxW) must be divisible by {k} for depth {}", dims[2], dims[3], self.config.depth),
            ));
        }
        Ok(())
    }

    /// Output in `(-1, 1)`, same spatial size as `x`. Parameters are registered under `set`
    /// (trainable) or as constants when `set` is `None`.
    pub fn forward(&self, tape: &mut Tape<T>, x: Var, set: Option<u32>, ctx: &ForwardCtx) -> Result<(Var, StatUpdates)> {
        self.check_input(tape.dims(x))?;
        let vars = self.params.register(tape, set);
        self.forward_with(tape, &vars, x, ctx)
    }

    /// Forward with parameters already on the tape (as returned by `params.register`).
    pub fn forward_with(&self, tape: &mut Tape<T>, vars: &[Var], x: Var, ctx: &ForwardCtx) -> Result<(Var, StatUpdates)> {
        let (skips, mut updates) = self.encode(tape, vars, x, ctx)?;
        let d = self.down.len();
        let mut h = skips[d - 1];
        for (k, blk) in self.up.iter().enumerate() {
            let level = d - 1 - k;
            h = conv_t_fwd(tape, vars, &blk.conv, h)?;
            h = norm_fwd(tape, vars, &self.buffers, blk.norm, &self.norms[blk.norm], h, ctx.mode, &mut updates)?;
            if blk.dropout {
                h = tape.dropout(h, 0.5, ctx.mode, crate::rng::mix(ctx.dropout_seed, k as u64))?;
            }
            h = tape.activation(h, Activation::Relu)?;
            let mut skip = skips[level - 1];
            if ctx.ablate_skip == Some(level) {
                let zeros = Tensor::zeros(tape.dims(skip));
                skip = tape.constant(&zeros);
            }
            h = tape.concat(h, skip)?;
        }
        h = conv_t_fwd(tape, vars, &self.out, h)?;
        h = tape.activation(h, Activation::Tanh)?;
        Ok((h, updates))
    }

    /// Encoder half: the activation of every level, outermost first. The last entry is the bottleneck.
    pub fn encode(&self, tape: &mut Tape<T>, vars: &[Var], x: Var, ctx: &ForwardCtx) -> Result<(Vec<Var>, StatUpdates)> {
        self.check_input(tape.dims(x))?;
        let mut updates = StatUpdates::default();
        let mut skips = Vec::with_capacity(self.down.len());
        let mut h = x;
        for blk in &self.down {
            h = conv_fwd(tape, vars, &blk.conv, h)?;
            if let Some(n) = blk.norm {
                h = norm_fwd(tape, vars, &self.buffers, n, &self.norms[n], h, ctx.mode, &mut updates)?;
            }
            h = tape.activation(h, Activation::LEAKY)?;
            skips.push(h);
        }
        Ok((skips, updates))
    }

    pub fn apply_stat_updates(&mut self, updates: &StatUpdates) {
        apply_updates(&self.norms, &mut self.buffers, updates);
    }

    /// Eval-mode forward without gradients.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let (y, _) = self.forward(&mut tape, xv, None, &ForwardCtx::eval())?;
        Ok(tape.tensor(y))
    }

    /// Same architecture with parameters converted to `U`.
    pub fn cast<U: Scalar>(&self) -> Generator<U> {
        Generator {
            config: self.config.clone(),
            params: self.params.cast(),
            buffers: self.buffers.cast(),
            norms: self.norms.clone(),
            down: self.down.clone(),
            up: self.up.clone(),
            out: self.out.clone(),
        }
    }

}
