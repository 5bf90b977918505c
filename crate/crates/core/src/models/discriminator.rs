use super::{
    apply_updates, conv_fwd, norm_fwd, Builder, ConvLayer, ForwardCtx, NormLayer, ParamSet, StatUpdates,
    CONDITION_CHANNELS, IMAGE_CHANNELS,
};
use crate::autodiff::{Activation, NormSpec, Scalar, Tape, Tensor, Var};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub base_channels: usize,
    pub condition_channels: usize,
    pub image_channels: usize,
    /// Stride-2 blocks before the stride-1 block.
    pub n_strided: usize,
    pub norm: NormSpec,
    pub seed: u64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            base_channels: 64,
            condition_channels: CONDITION_CHANNELS,
            image_channels: IMAGE_CHANNELS,
            n_strided: 3,
            norm: NormSpec::group(2),
            seed: 1,
        }
    }
}

impl DiscriminatorConfig {
    /// Output channels of block `j` (0-based).
    pub fn channels(&self, j: usize) -> usize {
        (self.base_channels << j.min(3)).min(8 * self.base_channels)
    }

    /// Logit map size for an `h x w` input, if positive.
    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let f = |mut s: usize| {
            for _ in 0..self.n_strided {
                s = (s + 2).checked_sub(4)? / 2 + 1;
            }
            // stride-1 block and final conv, both k4 p1
            let s = (s + 2).checked_sub(4)? + 1;
            let s = (s + 2).checked_sub(4)? + 1;
            Some(s)
        };
        Some((f(h)?, f(w)?))
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 || self.condition_channels + self.image_channels == 0 {
            return Err(Error::Config("discriminator channel counts must be positive".into()));
        }
        for j in 1..=self.n_strided {
            self.norm
                .validate(self.channels(j))
                .map_err(|e| Error::Config(format!("discriminator block {j}: {e}")))?;
        }
        Ok(())
    }
}

/// PatchGAN: strided conv blocks, one stride-1 block, then a 1-channel logit conv.
#[derive(Debug, Clone)]
pub struct Discriminator<T = f32> {
    pub config: DiscriminatorConfig,
    pub params: ParamSet<T>,
    pub buffers: ParamSet<T>,
    norms: Vec<NormLayer>,
    blocks: Vec<(ConvLayer, Option<usize>)>,
    out: ConvLayer,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(config: DiscriminatorConfig) -> Result<Self> {
        config.validate()?;
        let (mut params, mut buffers) = (ParamSet::new(), ParamSet::new());
        let mut norms = Vec::new();
        let mut blocks = Vec::new();
        let out;
        {
            let mut b = Builder {
                params: &mut params,
                buffers: &mut buffers,
                rng: crate::rng::keyed(config.seed, 0xd15c),
            };
            let mut cin = config.condition_channels + config.image_channels;
            for j in 0..=config.n_strided {
                let cout = config.channels(j);
                let stride = if j < config.n_strided { 2 } else { 1 };
                let conv = b.conv(&format!("block{}.conv", j + 1), cout, cin, cout, stride, 1);
                let norm = if j == 0 {
                    None
                } else {
                    norms.push(b.norm(&format!("block{}.norm", j + 1), config.norm, cout)?);
                    Some(norms.len() - 1)
                };
                blocks.push((conv, norm));
                cin = cout;
            }
            out = b.conv("out.conv", 1, cin, 1, 1, 1);
        }
        Ok(Self {
            config,
            params,
            buffers,
            norms,
            blocks,
            out,
        })
    }

    /// Patch logits `(N, 1, h', w')` for a conditioning/candidate pair.
    pub fn forward(
        &self,
        tape: &mut Tape<T>,
        condition: Var,
        candidate: Var,
        set: Option<u32>,
        ctx: &ForwardCtx,
    ) -> Result<(Var, StatUpdates)> {
        let vars = self.params.register(tape, set);
        self.forward_with(tape, &vars, condition, candidate, ctx)
    }

    /// Forward with parameters already on the tape.
    pub fn forward_with(
        &self,
        tape: &mut Tape<T>,
        vars: &[Var],
        condition: Var,
        candidate: Var,
        ctx: &ForwardCtx,
    ) -> Result<(Var, StatUpdates)> {
        let (cd, xd) = (tape.dims(condition), tape.dims(candidate));
        if cd[0] != xd[0] || cd[2] != xd[2] || cd[3] != xd[3] {
            return Err(Error::shape("discriminator inputs", cd, xd));
        }
        if cd[1] != self.config.condition_channels || xd[1] != self.config.image_channels {
            return Err(Error::shape("discriminator channels", cd, xd));
        }
        if self.config.output_size(cd[2], cd[3]).is_none_or(|(h, w)| h == 0 || w == 0) {
            return Err(Error::invalid(
                "discriminator",
                format!("input {}x{} too small for {} strided blocks", cd[2], cd[3], self.config.n_strided),
            ));
        }
        let mut updates = StatUpdates::default();
        let mut h = tape.concat(condition, candidate)?;
        for (conv, norm) in &self.blocks {
            h = conv_fwd(tape, vars, conv, h)?;
            if let Some(n) = *norm {
                h = norm_fwd(tape, vars, &self.buffers, n, &self.norms[n], h, ctx.mode, &mut updates)?;
            }
            h = tape.activation(h, Activation::LEAKY)?;
        }
        h = conv_fwd(tape, vars, &self.out, h)?;
        Ok((h, updates))
    }

    pub fn apply_stat_updates(&mut self, updates: &StatUpdates) {
        apply_updates(&self.norms, &mut self.buffers, updates);
    }

    pub fn infer(&self, condition: &Tensor<T>, candidate: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let c = tape.constant(condition);
        let x = tape.constant(candidate);
        let (y, _) = self.forward(&mut tape, c, x, None, &ForwardCtx::eval())?;
        Ok(tape.tensor(y))
    }

    pub fn cast<U: Scalar>(&self) -> Discriminator<U> {
        Discriminator {
            config: self.config.clone(),
            params: self.params.cast(),
            buffers: self.buffers.cast(),
            norms: self.norms.clone(),
            blocks: self.blocks.clone(),
            out: self.out.clone(),
        }
    }
}
