//! Operation descriptors shared by the tape and the gradient-free functional API.

use super::kernels::SliceLayout;
use super::Scalar;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    /// Leaky ReLU with the conventional 0.2 negative slope.
    pub const LEAKY: Activation = Activation::LeakyRelu(0.2);

    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            Activation::LeakyRelu(s) if !(s > 0.0 && s < 1.0) => {
                Err(Error::invalid("activation", format!("leaky slope {s} outside (0,1)")))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub(crate) fn apply<T: Scalar>(&self, x: T) -> T {
        match *self {
            Activation::Relu => x.max(T::zero()),
            Activation::LeakyRelu(s) => {
                if x > T::zero() {
                    x
                } else {
                    x * T::of(s)
                }
            }
            Activation::Tanh => open_unit(x.tanh()),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through input `x` and output `y`.
    #[inline]
    pub(crate) fn derivative<T: Scalar>(&self, x: T, y: T) -> T {
        match *self {
            Activation::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::LeakyRelu(s) => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::of(s)
                }
            }
            Activation::Tanh => T::one() - y * y,
            Activation::Sigmoid => y * (T::one() - y),
        }
    }
}

/// Clamps a saturated `tanh` to the representable values nearest ±1, keeping the range open.
#[inline]
fn open_unit<T: Scalar>(y: T) -> T {
    let edge = T::one() - T::epsilon() / T::of(2.0);
    y.max(-edge).min(edge)
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    let y = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    y.max(T::min_positive_value()).min(T::one() - T::epsilon() / T::of(2.0))
}

/// `max(z,0) - z*t + ln(1 + exp(-|z|))`, the overflow-free form of binary cross-entropy on logits.
#[inline]
pub(crate) fn bce_term<T: Scalar>(z: T, t: T) -> T {
    z.max(T::zero()) - z * t + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Batch,
    Instance,
    Group,
}

impl std::str::FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(NormKind::Batch),
            "instance" => Ok(NormKind::Instance),
            "group" => Ok(NormKind::Group),
            other => Err(Error::Config(format!("unknown norm kind `{other}` (batch|instance|group)"))),
        }
    }
}

impl std::fmt::Display for NormKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NormKind::Batch => "batch",
            NormKind::Instance => "instance",
            NormKind::Group => "group",
        })
    }
}

/// Static configuration of a normalization layer.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormSpec {
    pub kind: NormKind,
    /// Only meaningful for [`NormKind::Group`].
    pub groups: usize,
    pub eps: f64,
    /// Running-statistics update rate (batch kind only).
    pub momentum: f64,
}

impl Default for NormSpec {
    fn default() -> Self {
        Self::group(2)
    }
}

impl NormSpec {
    pub fn new(kind: NormKind, groups: usize) -> Self {
        Self {
            kind,
            groups,
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn group(groups: usize) -> Self {
        Self::new(NormKind::Group, groups)
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::invalid("normalize", "epsilon must be positive"));
        }
        if self.kind == NormKind::Batch && !(self.momentum > 0.0 && self.momentum < 1.0) {
            return Err(Error::invalid("normalize", "momentum must lie in (0,1)"));
        }
        if self.kind == NormKind::Group && (self.groups == 0 || !channels.is_multiple_of(self.groups)) {
            return Err(Error::invalid(
                "normalize",
                format!("{} groups do not divide {channels} channels", self.groups),
            ));
        }
        Ok(())
    }

    pub(crate) fn layout(&self, channels: usize) -> SliceLayout {
        match self.kind {
            NormKind::Batch => SliceLayout::PerChannel,
            NormKind::Instance => SliceLayout::Grouped(channels),
            NormKind::Group => SliceLayout::Grouped(self.groups),
        }
    }
}

/// Learnable affine parameters plus running statistics of one normalization layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NormParams<T = f32> {
    pub spec: NormSpec,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Scalar> NormParams<T> {
    pub fn new(spec: NormSpec, channels: usize) -> Result<Self> {
        spec.validate(channels)?;
        Ok(Self {
            spec,
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Exponential moving update from a training batch's per-channel moments.
    pub fn update_running(&mut self, mean: &[f64], var: &[f64], count: usize) {
        let m = self.spec.momentum;
        let unbias = if count > 1 { count as f64 / (count as f64 - 1.0) } else { 1.0 };
        for c in 0..self.channels() {
            self.running_mean[c] = T::of((1.0 - m) * self.running_mean[c].f64() + m * mean[c]);
            self.running_var[c] = T::of((1.0 - m) * self.running_var[c].f64() + m * var[c] * unbias);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}
