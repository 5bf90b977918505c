//! Per-forward-pass tape for reverse-mode differentiation.
//!
//! Every op appends a node holding its output value; [`Tape::backward`] walks
//! the nodes in reverse and accumulates gradients into their inputs. The tape
//! is rebuilt for each forward pass.

use rand::Rng;

use super::kernels::{self, ConvGeom, SliceLayout};
use super::ops::{bce_term, sigmoid, Activation, Mode, NormKind, NormSpec, Reduction};
use super::tensor::{numel, Dims, Tensor};
use super::Scalar;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Identifies a network parameter registered on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamKey {
    pub set: u32,
    pub index: usize,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    Act {
        x: Var,
        kind: Activation,
    },
    Norm {
        x: Var,
        gamma: Var,
        beta: Var,
        layout: SliceLayout,
        mean: Vec<T>,
        rstd: Vec<T>,
        through_stats: bool,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Dropout {
        x: Var,
        mask: Vec<T>,
    },
    Bce {
        logits: Var,
        target: Var,
    },
    L1 {
        a: Var,
        b: Var,
        reduction: Reduction,
    },
    Sum {
        x: Var,
        scale: T,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        k: T,
    },
}

#[derive(Debug)]
struct Node<T> {
    dims: Dims,
    value: Vec<T>,
    grad: Option<Vec<T>>,
    needs_grad: bool,
    op: Op<T>,
}

#[derive(Debug, Default)]
pub struct Tape<T = f32> {
    nodes: Vec<Node<T>>,
    params: Vec<(ParamKey, Var)>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, dims: Dims, value: Vec<T>, needs_grad: bool, op: Op<T>) -> Var {
        debug_assert_eq!(numel(dims), value.len());
        self.nodes.push(Node {
            dims,
            value,
            grad: None,
            needs_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<T> {
        &self.nodes[v.0]
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Records a tensor; it receives a gradient iff `t.requires_grad`.
    pub fn leaf(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.dims(), t.data().to_vec(), t.requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, t: &Tensor<T>) -> Var {
        self.push(t.dims(), t.data().to_vec(), false, Op::Leaf)
    }

    /// Registers a trainable parameter under `key`.
    pub fn param(&mut self, key: ParamKey, dims: Dims, data: &[T]) -> Var {
        assert_eq!(numel(dims), data.len(), "parameter {key:?} length");
        let v = self.push(dims, data.to_vec(), true, Op::Leaf);
        self.params.push((key, v));
        v
    }

    /// Copy of `v`'s value that gradients do not flow through.
    pub fn detach(&mut self, v: Var) -> Var {
        let n = self.node(v);
        let (dims, value) = (n.dims, n.value.clone());
        self.push(dims, value, false, Op::Leaf)
    }

    pub fn dims(&self, v: Var) -> Dims {
        self.node(v).dims
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.node(v).value
    }

    pub fn scalar(&self, v: Var) -> T {
        self.node(v).value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor<T> {
        let n = self.node(v);
        Tensor::new(n.dims, n.value.clone()).expect("node holds a valid tensor")
    }

    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.node(v).grad.as_deref()
    }

    /// Gradients of every registered parameter of `set`, in registration order.
    pub fn param_grads(&self, set: u32) -> impl Iterator<Item = (usize, Option<&[T]>)> + '_ {
        self.params
            .iter()
            .filter(move |(k, _)| k.set == set)
            .map(|(k, v)| (k.index, self.grad(*v)))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeom::conv2d(self.dims(x), self.dims(w), stride, pad)?;
        let bias = self.bias_of(b, geom.output[1], "conv2d")?;
        let out = kernels::conv2d_forward(&geom, self.value(x), self.value(w), bias);
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(geom.output, out, needs, Op::Conv2d { x, w, b, geom }))
    }

    /// Weight layout `(Cin, Cout, Kh, Kw)`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let geom = ConvGeom::conv_transpose2d(self.dims(x), self.dims(w), stride, pad)?;
        let bias = self.bias_of(b, geom.output[1], "conv_transpose2d")?;
        let out = kernels::conv_transpose2d_forward(&geom, self.value(x), self.value(w), bias);
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(geom.output, out, needs, Op::ConvTranspose2d { x, w, b, geom }))
    }

    fn bias_of(&self, b: Option<Var>, channels: usize, op: &'static str) -> Result<Option<&[T]>> {
        match b {
            None => Ok(None),
            Some(b) if self.value(b).len() == channels => Ok(Some(self.value(b))),
            Some(b) => Err(Error::shape(op, self.dims(b), channels)),
        }
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        kind.validate()?;
        let n = self.node(x);
        if n.value.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("activation input".into()));
        }
        let out = n.value.iter().map(|&v| kind.apply(v)).collect();
        let (dims, needs) = (n.dims, n.needs_grad);
        Ok(self.push(dims, out, needs, Op::Act { x, kind }))
    }

    /// Normalizes `x` and applies the per-channel affine `gamma`, `beta`.
    ///
    /// Batch statistics are used except for the batch kind in eval mode, which
    /// reads `running`. In train mode the batch kind also returns the batch's
    /// per-channel `(mean, var)` so the caller can update its running statistics.
    #[allow(clippy::type_complexity)]
    pub fn normalize(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        spec: &NormSpec,
        mode: Mode,
        running: Option<(&[T], &[T])>,
    ) -> Result<(Var, Option<(Vec<f64>, Vec<f64>)>)> {
        let dims = self.dims(x);
        let channels = dims[1];
        spec.validate(channels)?;
        if self.value(gamma).len() != channels || self.value(beta).len() != channels {
            return Err(Error::shape("normalize affine", self.dims(gamma), dims));
        }
        let layout = spec.layout(channels);
        let use_running = spec.kind == NormKind::Batch && mode == Mode::Eval;
        let (mean, var, moments) = if use_running {
            let (rm, rv) = running.ok_or_else(|| Error::invalid("normalize", "eval-mode batch norm needs running statistics"))?;
            let mean: Vec<f64> = rm.iter().map(|v| v.f64()).collect();
            let var: Vec<f64> = rv.iter().map(|v| v.f64()).collect();
            (mean, var, None)
        } else {
            let (mean, var) = kernels::slice_moments(layout, dims, self.value(x));
            let moments = (spec.kind == NormKind::Batch).then(|| (mean.clone(), var.clone()));
            (mean, var, moments)
        };
        let rstd: Vec<T> = var.iter().map(|v| T::of(1.0 / (v + spec.eps).sqrt())).collect();
        let mean: Vec<T> = mean.into_iter().map(T::of).collect();
        let out = kernels::normalize_apply(layout, dims, self.value(x), &mean, &rstd, self.value(gamma), self.value(beta));
        let needs = self.needs(x) || self.needs(gamma) || self.needs(beta);
        let v = self.push(
            dims,
            out,
            needs,
            Op::Norm {
                x,
                gamma,
                beta,
                layout,
                mean,
                rstd,
                through_stats: !use_running,
            },
        );
        Ok((v, moments))
    }

    /// Channel concatenation `[a, b]`.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ad, bd) = (self.dims(a), self.dims(b));
        let out = kernels::concat_channels(ad, self.value(a), bd, self.value(b))?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push([ad[0], ad[1] + bd[1], ad[2], ad[3]], out, needs, Op::Concat { a, b }))
    }

    /// Inverted dropout: survivors are scaled by `1/(1-p)`; identity in eval mode or at `p = 0`.
    pub fn dropout(&mut self, x: Var, p: f64, mode: Mode, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::invalid("dropout", format!("p = {p} outside [0,1)")));
        }
        if mode == Mode::Eval || p == 0.0 {
            return Ok(x);
        }
        let mut rng = crate::rng::rng(seed);
        let keep = T::of(1.0 / (1.0 - p));
        let n = self.node(x);
        let mask: Vec<T> = (0..n.value.len())
            .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
            .collect();
        let out = n.value.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let (dims, needs) = (n.dims, n.needs_grad);
        Ok(self.push(dims, out, needs, Op::Dropout { x, mask }))
    }

    /// Mean binary cross-entropy of `logits` against `target` in `[0,1]`.
    pub fn bce_with_logits(&mut self, logits: Var, target: Var) -> Result<Var> {
        let (ld, td) = (self.dims(logits), self.dims(target));
        if ld != td {
            return Err(Error::shape("bce_with_logits", ld, td));
        }
        let t = self.value(target);
        if t.iter().any(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::invalid("bce_with_logits", "targets must lie in [0,1]"));
        }
        let z = self.value(logits);
        let total: f64 = z.iter().zip(t).map(|(&z, &t)| bce_term(z, t).f64()).sum();
        let loss = T::of(total / z.len() as f64);
        let needs = self.needs(logits);
        Ok(self.push([1, 1, 1, 1], vec![loss], needs, Op::Bce { logits, target }))
    }

    pub fn l1_loss(&mut self, a: Var, b: Var, reduction: Reduction) -> Result<Var> {
        let (ad, bd) = (self.dims(a), self.dims(b));
        if ad != bd {
            return Err(Error::shape("l1_loss", ad, bd));
        }
        let sum: f64 = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| (x - y).abs().f64()).sum();
        let loss = match reduction {
            Reduction::Sum => sum,
            Reduction::Mean => sum / numel(ad) as f64,
        };
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push([1, 1, 1, 1], vec![T::of(loss)], needs, Op::L1 { a, b, reduction }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        self.reduce(x, T::one())
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let k = T::of(1.0 / self.value(x).len() as f64);
        self.reduce(x, k)
    }

    fn reduce(&mut self, x: Var, scale: T) -> Var {
        let s: f64 = self.value(x).iter().map(|v| v.f64()).sum();
        let needs = self.needs(x);
        self.push([1, 1, 1, 1], vec![T::of(s) * scale], needs, Op::Sum { x, scale })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(T, T) -> T,
        op: impl Fn(Var, Var) -> Op<T>,
    ) -> Result<Var> {
        let (ad, bd) = (self.dims(a), self.dims(b));
        if ad != bd {
            return Err(Error::shape(name, ad, bd));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(ad, out, needs, op(a, b)))
    }

    pub fn scale(&mut self, x: Var, k: f64) -> Var {
        let k = T::of(k);
        let out = self.value(x).iter().map(|&v| v * k).collect();
        let (dims, needs) = (self.dims(x), self.needs(x));
        self.push(dims, out, needs, Op::Scale { x, k })
    }

    /// Reverse-mode sweep from the scalar `loss`. Clears gradients left by a
    /// previous sweep, so one tape can serve several losses in turn.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let dims = self.dims(loss);
        if numel(dims) != 1 {
            return Err(Error::invalid("backward", format!("loss must be scalar, got {dims:?}")));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad || matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(dy) = self.nodes[i].grad.take() else {
                continue;
            };
            self.propagate(i, &dy);
        }
        Ok(())
    }

    /// Mutable zero-initialized gradient buffer of `v`, or `None` if `v` takes no gradient.
    fn grad_buf(nodes: &mut [Node<T>], v: Var) -> Option<Vec<T>> {
        let n = &mut nodes[v.0];
        if !n.needs_grad {
            return None;
        }
        Some(n.grad.take().unwrap_or_else(|| vec![T::zero(); n.value.len()]))
    }

    fn put(nodes: &mut [Node<T>], v: Var, g: Option<Vec<T>>) {
        if let Some(g) = g {
            nodes[v.0].grad = Some(g);
        }
    }

    fn propagate(&mut self, i: usize, dy: &[T]) {
        let (done, rest) = self.nodes.split_at_mut(i);
        let node = &rest[0];
        let nodes = done;
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } | Op::ConvTranspose2d { x, w, b, geom } => {
                let transpose = matches!(node.op, Op::ConvTranspose2d { .. });
                let mut gx = Self::grad_buf(nodes, *x);
                let mut gw = Self::grad_buf(nodes, *w);
                let mut gb = b.and_then(|b| Self::grad_buf(nodes, b));
                let backward = if transpose {
                    kernels::conv_transpose2d_backward
                } else {
                    kernels::conv2d_backward
                };
                backward(
                    geom,
                    &nodes[x.0].value,
                    &nodes[w.0].value,
                    dy,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                Self::put(nodes, *x, gx);
                Self::put(nodes, *w, gw);
                if let Some(b) = b {
                    Self::put(nodes, *b, gb);
                }
            }
            Op::Act { x, kind } => {
                if let Some(mut g) = Self::grad_buf(nodes, *x) {
                    let xs = &nodes[x.0].value;
                    for (((o, &xv), &yv), &d) in g.iter_mut().zip(xs).zip(&node.value).zip(dy) {
                        *o = *o + d * kind.derivative(xv, yv);
                    }
                    Self::put(nodes, *x, Some(g));
                }
            }
            Op::Norm {
                x,
                gamma,
                beta,
                layout,
                mean,
                rstd,
                through_stats,
            } => {
                let mut gx = Self::grad_buf(nodes, *x);
                let mut gg = Self::grad_buf(nodes, *gamma);
                let mut gbeta = Self::grad_buf(nodes, *beta);
                kernels::normalize_backward(
                    *layout,
                    nodes[x.0].dims,
                    &nodes[x.0].value,
                    mean,
                    rstd,
                    &nodes[gamma.0].value,
                    dy,
                    *through_stats,
                    gx.as_deref_mut(),
                    gg.as_deref_mut(),
                    gbeta.as_deref_mut(),
                );
                Self::put(nodes, *x, gx);
                Self::put(nodes, *gamma, gg);
                Self::put(nodes, *beta, gbeta);
            }
            Op::Concat { a, b } => {
                let (ad, bd) = (nodes[a.0].dims, nodes[b.0].dims);
                let plane = ad[2] * ad[3];
                let (pa, pb) = (ad[1] * plane, bd[1] * plane);
                if let Some(mut g) = Self::grad_buf(nodes, *a) {
                    for n in 0..ad[0] {
                        let src = &dy[n * (pa + pb)..n * (pa + pb) + pa];
                        g[n * pa..(n + 1) * pa].iter_mut().zip(src).for_each(|(o, &d)| *o = *o + d);
                    }
                    Self::put(nodes, *a, Some(g));
                }
                if let Some(mut g) = Self::grad_buf(nodes, *b) {
                    for n in 0..bd[0] {
                        let src = &dy[n * (pa + pb) + pa..(n + 1) * (pa + pb)];
                        g[n * pb..(n + 1) * pb].iter_mut().zip(src).for_each(|(o, &d)| *o = *o + d);
                    }
                    Self::put(nodes, *b, Some(g));
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(mut g) = Self::grad_buf(nodes, *x) {
                    for ((o, &m), &d) in g.iter_mut().zip(mask).zip(dy) {
                        *o = *o + d * m;
                    }
                    Self::put(nodes, *x, Some(g));
                }
            }
            Op::Bce { logits, target } => {
                if let Some(mut g) = Self::grad_buf(nodes, *logits) {
                    let k = dy[0] / T::of(g.len() as f64);
                    let (z, t) = (&nodes[logits.0].value, &nodes[target.0].value);
                    for ((o, &z), &t) in g.iter_mut().zip(z).zip(t) {
                        *o = *o + k * (sigmoid(z) - t);
                    }
                    Self::put(nodes, *logits, Some(g));
                }
            }
            Op::L1 { a, b, reduction } => {
                let k = match reduction {
                    Reduction::Sum => dy[0],
                    Reduction::Mean => dy[0] / T::of(nodes[a.0].value.len() as f64),
                };
                let sign: Vec<T> = nodes[a.0]
                    .value
                    .iter()
                    .zip(&nodes[b.0].value)
                    .map(|(&x, &y)| {
                        if x > y {
                            k
                        } else if x < y {
                            -k
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                if let Some(mut g) = Self::grad_buf(nodes, *a) {
                    g.iter_mut().zip(&sign).for_each(|(o, &s)| *o = *o + s);
                    Self::put(nodes, *a, Some(g));
                }
                if let Some(mut g) = Self::grad_buf(nodes, *b) {
                    g.iter_mut().zip(&sign).for_each(|(o, &s)| *o = *o - s);
                    Self::put(nodes, *b, Some(g));
                }
            }
            Op::Sum { x, scale } => {
                if let Some(mut g) = Self::grad_buf(nodes, *x) {
                    let d = dy[0] * *scale;
                    g.iter_mut().for_each(|o| *o = *o + d);
                    Self::put(nodes, *x, Some(g));
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if let Some(mut g) = Self::grad_buf(nodes, v) {
                        g.iter_mut().zip(dy).for_each(|(o, &d)| *o = *o + d);
                        Self::put(nodes, v, Some(g));
                    }
                }
            }
            Op::Mul { a, b } => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    if let Some(mut g) = Self::grad_buf(nodes, v) {
                        let o_val = &nodes[other.0].value;
                        for ((o, &d), &w) in g.iter_mut().zip(dy).zip(o_val) {
                            *o = *o + d * w;
                        }
                        Self::put(nodes, v, Some(g));
                    }
                }
            }
            Op::Scale { x, k } => {
                if let Some(mut g) = Self::grad_buf(nodes, *x) {
                    g.iter_mut().zip(dy).for_each(|(o, &d)| *o = *o + d * *k);
                    Self::put(nodes, *x, Some(g));
                }
            }
        }
    }
}
