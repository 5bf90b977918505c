//! Gradient-free forms of the tape operations, for inference and metrics.

use super::kernels::{self, ConvGeom};
use super::ops::{bce_term, Activation, Mode, NormParams, Reduction};
use super::tape::{ParamKey, Tape};
use super::tensor::Tensor;
use super::Scalar;
use crate::error::{Error, Result};

pub fn conv2d<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, bias: Option<&[T]>, stride: usize, pad: usize) -> Result<Tensor<T>> {
    let geom = ConvGeom::conv2d(x.dims(), w.dims(), stride, pad)?;
    check_bias(bias, geom.output[1], "conv2d")?;
    Tensor::new(geom.output, kernels::conv2d_forward(&geom, x.data(), w.data(), bias))
}

/// Weight layout `(Cin, Cout, Kh, Kw)`.
pub fn conv_transpose2d<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&[T]>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let geom = ConvGeom::conv_transpose2d(x.dims(), w.dims(), stride, pad)?;
    check_bias(bias, geom.output[1], "conv_transpose2d")?;
    Tensor::new(geom.output, kernels::conv_transpose2d_forward(&geom, x.data(), w.data(), bias))
}

fn check_bias<T>(bias: Option<&[T]>, channels: usize, op: &'static str) -> Result<()> {
    match bias {
        Some(b) if b.len() != channels => Err(Error::shape(op, b.len(), channels)),
        _ => Ok(()),
    }
}

pub fn activation<T: Scalar>(x: &Tensor<T>, kind: Activation) -> Result<Tensor<T>> {
    kind.validate()?;
    if !x.is_finite() {
        return Err(Error::NonFinite("activation input".into()));
    }
    let mut y = x.clone();
    y.grad = None;
    y.data_mut().iter_mut().for_each(|v| *v = kind.apply(*v));
    Ok(y)
}

/// Normalization without running-statistics updates.
pub fn normalize<T: Scalar>(x: &Tensor<T>, params: &NormParams<T>, mode: Mode) -> Result<Tensor<T>> {
    let c = x.dims()[1];
    if params.channels() != c {
        return Err(Error::shape("normalize", params.channels(), x.dims()));
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let key = ParamKey { set: 0, index: 0 };
    let g = tape.param(key, [1, c, 1, 1], &params.gamma);
    let b = tape.param(key, [1, c, 1, 1], &params.beta);
    let running = Some((&params.running_mean[..], &params.running_var[..]));
    let (y, _) = tape.normalize(xv, g, b, &params.spec, mode, running)?;
    Ok(tape.tensor(y))
}

pub fn bce_with_logits<T: Scalar>(logits: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    if logits.dims() != target.dims() {
        return Err(Error::shape("bce_with_logits", logits.dims(), target.dims()));
    }
    let total: f64 = logits
        .data()
        .iter()
        .zip(target.data())
        .map(|(&z, &t)| bce_term(z, t).f64())
        .sum();
    Ok(total / logits.len() as f64)
}

pub fn l1_loss<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, reduction: Reduction) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::shape("l1_loss", a.dims(), b.dims()));
    }
    let sum: f64 = a.data().iter().zip(b.data()).map(|(&x, &y)| (x - y).abs().f64()).sum();
    Ok(match reduction {
        Reduction::Sum => sum,
        Reduction::Mean => sum / a.len() as f64,
    })
}

pub fn dropout<T: Scalar>(x: &Tensor<T>, p: f64, mode: Mode, seed: u64) -> Result<Tensor<T>> {
    let mut tape = Tape::new();
    let v = tape.constant(x);
    let y = tape.dropout(v, p, mode, seed)?;
    Ok(tape.tensor(y))
}
