//! U-Net generator and PatchGAN discriminator over the autodiff tape.

mod discriminator;
mod generator;

pub use discriminator::{Discriminator, DiscriminatorConfig};
pub use generator::{Generator, GeneratorConfig};

use crate::autodiff::{Dims, Mode, NormSpec, ParamKey, Scalar, Tape, Var};
use crate::error::{Error, Result};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Conditioning channels: direct RGB, depth, normal RGB, albedo RGB, with depth replicated to RGB.
pub const CONDITION_CHANNELS: usize = 12;
pub const IMAGE_CHANNELS: usize = 3;

/// Standard deviation of the initial weights and of `γ` around 1.
pub const INIT_STD: f64 = 0.02;

/// One named tensor of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub dims: Dims,
    pub data: Vec<T>,
}

/// Ordered collection of named tensors; the order defines [`ParamKey::index`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<T> {
    items: Vec<Param<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self { items: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, dims: Dims, data: Vec<T>) -> usize {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        self.items.push(Param {
            name: name.into(),
            dims,
            data,
        });
        self.items.len() - 1
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &Param<T> {
        &self.items[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Param<T> {
        &mut self.items[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.items.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.items.iter_mut()
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.items.iter().position(|p| p.name == name)
    }

    /// Total number of scalars.
    pub fn numel(&self) -> usize {
        self.items.iter().map(|p| p.data.len()).sum()
    }

    /// Puts every tensor on `tape`; trainable under `set` or constant when `set` is `None`.
    pub fn register(&self, tape: &mut Tape<T>, set: Option<u32>) -> Vec<Var> {
        self.items
            .iter()
            .enumerate()
            .map(|(index, p)| match set {
                Some(set) => tape.param(ParamKey { set, index }, p.dims, &p.data),
                None => {
                    let t = crate::autodiff::Tensor::new(p.dims, p.data.clone()).expect("param dims match data");
                    tape.constant(&t)
                }
            })
            .collect()
    }

    /// Converts every tensor to another scalar type.
    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            items: self
                .items
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    dims: p.dims,
                    data: p.data.iter().map(|v| U::of(v.f64())).collect(),
                })
                .collect(),
        }
    }
}

/// Per-pass settings shared by both networks.
#[derive(Debug, Clone, Default)]
pub struct ForwardCtx {
    pub mode: Mode,
    /// Seed for dropout masks (generator only).
    pub dropout_seed: u64,
    /// Zero the skip connection at this encoder level (1 = outermost); for ablation tests.
    pub ablate_skip: Option<usize>,
}

impl ForwardCtx {
    pub fn train(dropout_seed: u64) -> Self {
        Self {
            mode: Mode::Train,
            dropout_seed,
            ablate_skip: None,
        }
    }

    pub fn eval() -> Self {
        Self {
            mode: Mode::Eval,
            ..Self::default()
        }
    }
}

/// Batch moments gathered by batch-norm layers during a training pass.
#[derive(Debug, Clone, Default)]
pub struct StatUpdates {
    /// `(norm layer index, mean, var, element count per channel)`.
    pub entries: Vec<(usize, Vec<f64>, Vec<f64>, usize)>,
}

#[derive(Debug, Clone)]
pub(crate) struct ConvLayer {
    pub w: usize,
    pub b: usize,
    pub stride: usize,
    pub pad: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct NormLayer {
    pub spec: NormSpec,
    pub gamma: usize,
    pub beta: usize,
    pub running_mean: usize,
    pub running_var: usize,
}

/// Builds parameters and buffers with the standard initialization.
pub(crate) struct Builder<'a, T> {
    pub params: &'a mut ParamSet<T>,
    pub buffers: &'a mut ParamSet<T>,
    pub rng: ChaCha8Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn normal(&mut self, mean: f64, n: usize) -> Vec<T> {
        let dist = Normal::new(mean, INIT_STD).expect("valid normal");
        (0..n).map(|_| T::of(dist.sample(&mut self.rng))).collect()
    }

    /// Convolution weights `(a, b, 4, 4)`; `(out, in)` for conv, `(in, out)` for the transpose.
    pub fn conv(&mut self, name: &str, a: usize, b: usize, out: usize, stride: usize, pad: usize) -> ConvLayer {
        let dims = [a, b, 4, 4];
        let data = self.normal(0.0, a * b * 16);
        let w = self.params.push(format!("{name}.weight"), dims, data);
        let b = self.params.push(format!("{name}.bias"), [1, out, 1, 1], vec![T::zero(); out]);
        ConvLayer { w, b, stride, pad }
    }

    pub fn norm(&mut self, name: &str, spec: NormSpec, channels: usize) -> Result<NormLayer> {
        spec.validate(channels).map_err(|e| Error::Config(format!("{name}: {e}")))?;
        let g = self.normal(1.0, channels);
        let dims = [1, channels, 1, 1];
        Ok(NormLayer {
            spec,
            gamma: self.params.push(format!("{name}.gamma"), dims, g),
            beta: self.params.push(format!("{name}.beta"), dims, vec![T::zero(); channels]),
            running_mean: self.buffers.push(format!("{name}.running_mean"), dims, vec![T::zero(); channels]),
            running_var: self.buffers.push(format!("{name}.running_var"), dims, vec![T::one(); channels]),
        })
    }
}

pub(crate) fn conv_fwd<T: Scalar>(tape: &mut Tape<T>, vars: &[Var], l: &ConvLayer, x: Var) -> Result<Var> {
    tape.conv2d(x, vars[l.w], Some(vars[l.b]), l.stride, l.pad)
}

pub(crate) fn conv_t_fwd<T: Scalar>(tape: &mut Tape<T>, vars: &[Var], l: &ConvLayer, x: Var) -> Result<Var> {
    tape.conv_transpose2d(x, vars[l.w], Some(vars[l.b]), l.stride, l.pad)
}

pub(crate) fn norm_fwd<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &[Var],
    buffers: &ParamSet<T>,
    index: usize,
    l: &NormLayer,
    x: Var,
    mode: Mode,
    updates: &mut StatUpdates,
) -> Result<Var> {
    let running = Some((&buffers.get(l.running_mean).data[..], &buffers.get(l.running_var).data[..]));
    let dims = tape.dims(x);
    let (y, moments) = tape.normalize(x, vars[l.gamma], vars[l.beta], &l.spec, mode, running)?;
    if let Some((m, v)) = moments {
        updates.entries.push((index, m, v, dims[0] * dims[2] * dims[3]));
    }
    Ok(y)
}

pub(crate) fn apply_updates<T: Scalar>(norms: &[NormLayer], buffers: &mut ParamSet<T>, updates: &StatUpdates) {
    for (index, mean, var, count) in &updates.entries {
        let l = &norms[*index];
        let mom = l.spec.momentum;
        let unbias = if *count > 1 { *count as f64 / (*count as f64 - 1.0) } else { 1.0 };
        for (c, &m) in mean.iter().enumerate() {
            let rm = &mut buffers.get_mut(l.running_mean).data[c];
            *rm = T::of((1.0 - mom) * rm.f64() + mom * m);
        }
        for (c, &v) in var.iter().enumerate() {
            let rv = &mut buffers.get_mut(l.running_var).data[c];
            *rv = T::of((1.0 - mom) * rv.f64() + mom * v * unbias);
        }
    }
}

#[cfg(test)]
mod tests;
