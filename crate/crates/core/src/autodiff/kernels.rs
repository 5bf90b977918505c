//! Slice-level forward/backward kernels. Convolutions lower to im2col + GEMM.

use super::tensor::{numel, Dims};
use super::Scalar;
use crate::error::{Error, Result};

/// Geometry of one 2-D convolution window sweep.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Window {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl Window {
    fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.out_h * self.out_w
    }
}

pub(crate) fn conv_out_dim(op: &'static str, size: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::invalid(op, "stride must be >= 1"));
    }
    let padded = size + 2 * pad;
    if padded < k {
        return Err(Error::invalid(
            op,
            format!("kernel {k} exceeds padded input {padded}; output dim would be non-positive"),
        ));
    }
    Ok((padded - k) / stride + 1)
}

pub(crate) fn conv_transpose_out_dim(op: &'static str, size: usize, k: usize, stride: usize, pad: usize) -> Result<usize> {
    if stride == 0 {
        return Err(Error::invalid(op, "stride must be >= 1"));
    }
    let full = (size - 1) * stride + k;
    if full <= 2 * pad {
        return Err(Error::invalid(op, "output dim would be non-positive"));
    }
    Ok(full - 2 * pad)
}

fn im2col<T: Scalar>(x: &[T], g: &Window, cols: &mut [T]) {
    let ncols = g.cols();
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-add of [`im2col`]'s layout back into an image.
fn col2im<T: Scalar>(cols: &[T], g: &Window, x: &mut [T]) {
    let ncols = g.cols();
    let mut row = 0;
    for c in 0..g.channels {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            dst[ix as usize] = dst[ix as usize] + src[oy * g.out_w + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Shape bookkeeping shared by conv forward and backward.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub input: Dims,
    pub weight: Dims,
    pub output: Dims,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn conv2d(input: Dims, weight: Dims, stride: usize, pad: usize) -> Result<Self> {
        let [n, cin, h, w] = input;
        let [cout, wcin, kh, kw] = weight;
        if wcin != cin {
            return Err(Error::shape("conv2d input/weight", input, weight));
        }
        let oh = conv_out_dim("conv2d", h, kh, stride, pad)?;
        let ow = conv_out_dim("conv2d", w, kw, stride, pad)?;
        Ok(Self {
            input,
            weight,
            output: [n, cout, oh, ow],
            stride,
            pad,
        })
    }

    /// Weight layout `(Cin, Cout, Kh, Kw)`, the adjoint of a conv2d with the same weight.
    pub fn conv_transpose2d(input: Dims, weight: Dims, stride: usize, pad: usize) -> Result<Self> {
        let [n, cin, h, w] = input;
        let [wcin, cout, kh, kw] = weight;
        if wcin != cin {
            return Err(Error::shape("conv_transpose2d input/weight", input, weight));
        }
        let oh = conv_transpose_out_dim("conv_transpose2d", h, kh, stride, pad)?;
        let ow = conv_transpose_out_dim("conv_transpose2d", w, kw, stride, pad)?;
        Ok(Self {
            input,
            weight,
            output: [n, cout, oh, ow],
            stride,
            pad,
        })
    }

    /// Window over the conv2d input producing the conv2d output.
    fn forward_window(&self) -> Window {
        Window {
            channels: self.input[1],
            h: self.input[2],
            w: self.input[3],
            kh: self.weight[2],
            kw: self.weight[3],
            stride: self.stride,
            pad: self.pad,
            out_h: self.output[2],
            out_w: self.output[3],
        }
    }

    /// Window over the transposed conv's output producing its input grid.
    fn transpose_window(&self) -> Window {
        Window {
            channels: self.output[1],
            h: self.output[2],
            w: self.output[3],
            kh: self.weight[2],
            kw: self.weight[3],
            stride: self.stride,
            pad: self.pad,
            out_h: self.input[2],
            out_w: self.input[3],
        }
    }
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], n: usize, plane: usize) {
    for b in 0..n {
        for (c, &bv) in bias.iter().enumerate() {
            let start = (b * bias.len() + c) * plane;
            out[start..start + plane].iter_mut().for_each(|v| *v = *v + bv);
        }
    }
}

fn bias_grad<T: Scalar>(dy: &[T], db: &mut [T], n: usize, plane: usize) {
    let channels = db.len();
    for b in 0..n {
        for (c, g) in db.iter_mut().enumerate() {
            let start = (b * channels + c) * plane;
            *g = *g + dy[start..start + plane].iter().copied().sum::<T>();
        }
    }
}

pub(crate) fn conv2d_forward<T: Scalar>(g: &ConvGeom, x: &[T], w: &[T], bias: Option<&[T]>) -> Vec<T> {
    let win = g.forward_window();
    let (k, p) = (win.rows(), win.cols());
    let cout = g.weight[0];
    let n = g.input[0];
    let in_per = numel(g.input) / n;
    let out_per = cout * p;
    let mut out = vec![T::zero(); n * out_per];
    let mut cols = vec![T::zero(); k * p];
    for b in 0..n {
        im2col(&x[b * in_per..(b + 1) * in_per], &win, &mut cols);
        T::gemm(
            cout,
            k,
            p,
            w,
            (k as isize, 1),
            &cols,
            (p as isize, 1),
            T::zero(),
            &mut out[b * out_per..(b + 1) * out_per],
            p as isize,
        );
    }
    if let Some(bias) = bias {
        add_bias(&mut out, bias, n, p);
    }
    out
}

/// Accumulates into whichever gradient buffers are supplied.
pub(crate) fn conv2d_backward<T: Scalar>(
    g: &ConvGeom,
    x: &[T],
    w: &[T],
    dy: &[T],
    dx: Option<&mut [T]>,
    dw: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let win = g.forward_window();
    let (k, p) = (win.rows(), win.cols());
    let cout = g.weight[0];
    let n = g.input[0];
    let in_per = numel(g.input) / n;
    let out_per = cout * p;
    let mut cols = vec![T::zero(); k * p];
    if let Some(dw) = dw {
        for b in 0..n {
            im2col(&x[b * in_per..(b + 1) * in_per], &win, &mut cols);
            // dW (cout x k) += dY (cout x p) . cols^T (p x k)
            T::gemm(
                cout,
                p,
                k,
                &dy[b * out_per..(b + 1) * out_per],
                (p as isize, 1),
                &cols,
                (1, p as isize),
                T::one(),
                dw,
                k as isize,
            );
        }
    }
    if let Some(dx) = dx {
        for b in 0..n {
            // dcols (k x p) = W^T (k x cout) . dY (cout x p)
            T::gemm(
                k,
                cout,
                p,
                w,
                (1, k as isize),
                &dy[b * out_per..(b + 1) * out_per],
                (p as isize, 1),
                T::zero(),
                &mut cols,
                p as isize,
            );
            col2im(&cols, &win, &mut dx[b * in_per..(b + 1) * in_per]);
        }
    }
    if let Some(db) = db {
        bias_grad(dy, db, n, p);
    }
}

pub(crate) fn conv_transpose2d_forward<T: Scalar>(g: &ConvGeom, x: &[T], w: &[T], bias: Option<&[T]>) -> Vec<T> {
    let win = g.transpose_window();
    let (k, p) = (win.rows(), win.cols());
    let cin = g.input[1];
    let n = g.input[0];
    let in_per = cin * p;
    let out_per = numel(g.output) / n;
    let mut out = vec![T::zero(); n * out_per];
    let mut cols = vec![T::zero(); k * p];
    for b in 0..n {
        // cols (k x p) = Wt^T (k x cin) . X (cin x p)
        T::gemm(
            k,
            cin,
            p,
            w,
            (1, k as isize),
            &x[b * in_per..(b + 1) * in_per],
            (p as isize, 1),
            T::zero(),
            &mut cols,
            p as isize,
        );
        col2im(&cols, &win, &mut out[b * out_per..(b + 1) * out_per]);
    }
    if let Some(bias) = bias {
        add_bias(&mut out, bias, n, g.output[2] * g.output[3]);
    }
    out
}

pub(crate) fn conv_transpose2d_backward<T: Scalar>(
    g: &ConvGeom,
    x: &[T],
    w: &[T],
    dy: &[T],
    dx: Option<&mut [T]>,
    dw: Option<&mut [T]>,
    db: Option<&mut [T]>,
) {
    let win = g.transpose_window();
    let (k, p) = (win.rows(), win.cols());
    let cin = g.input[1];
    let n = g.input[0];
    let in_per = cin * p;
    let out_per = numel(g.output) / n;
    if dx.is_some() || dw.is_some() {
        let mut cols = vec![T::zero(); k * p];
        let mut dx = dx;
        let mut dw = dw;
        for b in 0..n {
            im2col(&dy[b * out_per..(b + 1) * out_per], &win, &mut cols);
            if let Some(dx) = dx.as_deref_mut() {
                // dX (cin x p) = Wt (cin x k) . cols (k x p)
                T::gemm(
                    cin,
                    k,
                    p,
                    w,
                    (k as isize, 1),
                    &cols,
                    (p as isize, 1),
                    T::one(),
                    &mut dx[b * in_per..(b + 1) * in_per],
                    p as isize,
                );
            }
            if let Some(dw) = dw.as_deref_mut() {
                // dWt (cin x k) += X (cin x p) . cols^T (p x k)
                T::gemm(
                    cin,
                    p,
                    k,
                    &x[b * in_per..(b + 1) * in_per],
                    (p as isize, 1),
                    &cols,
                    (1, p as isize),
                    T::one(),
                    dw,
                    k as isize,
                );
            }
        }
    }
    if let Some(db) = db {
        bias_grad(dy, db, n, g.output[2] * g.output[3]);
    }
}

pub(crate) fn concat_channels<T: Scalar>(ad: Dims, a: &[T], bd: Dims, b: &[T]) -> Result<Vec<T>> {
    if ad[0] != bd[0] || ad[2] != bd[2] || ad[3] != bd[3] {
        return Err(Error::shape("concat", ad, bd));
    }
    let plane = ad[2] * ad[3];
    let (pa, pb) = (ad[1] * plane, bd[1] * plane);
    let mut out = Vec::with_capacity(a.len() + b.len());
    for n in 0..ad[0] {
        out.extend_from_slice(&a[n * pa..(n + 1) * pa]);
        out.extend_from_slice(&b[n * pb..(n + 1) * pb]);
    }
    Ok(out)
}

/// Per-slice statistics layout for the three normalization kinds.
#[derive(Debug, Clone, Copy)]
pub(crate) enum SliceLayout {
    /// One slice per channel over `(N, H, W)`.
    PerChannel,
    /// One slice per `(n, group)` over `(C/groups, H, W)`; instance norm is `groups == C`.
    Grouped(usize),
}

impl SliceLayout {
    pub fn count(&self, dims: Dims) -> usize {
        match *self {
            SliceLayout::PerChannel => dims[1],
            SliceLayout::Grouped(g) => dims[0] * g,
        }
    }

    /// Calls `f(slice, channel, flat_range)` for each contiguous run belonging to a slice.
    fn for_each_run(&self, dims: Dims, mut f: impl FnMut(usize, usize, std::ops::Range<usize>)) {
        let [n, c, h, w] = dims;
        let plane = h * w;
        for b in 0..n {
            for ch in 0..c {
                let slice = match *self {
                    SliceLayout::PerChannel => ch,
                    SliceLayout::Grouped(g) => b * g + ch / (c / g),
                };
                let start = (b * c + ch) * plane;
                f(slice, ch, start..start + plane);
            }
        }
    }
}

/// Mean and biased variance of each slice, accumulated in f64.
pub(crate) fn slice_moments<T: Scalar>(layout: SliceLayout, dims: Dims, x: &[T]) -> (Vec<f64>, Vec<f64>) {
    let count = layout.count(dims);
    let per = (numel(dims) / count) as f64;
    let mut sum = vec![0.0f64; count];
    layout.for_each_run(dims, |s, _, r| {
        sum[s] += x[r].iter().map(|v| v.f64()).sum::<f64>();
    });
    let mean: Vec<f64> = sum.iter().map(|s| s / per).collect();
    let mut sq = vec![0.0f64; count];
    layout.for_each_run(dims, |s, _, r| {
        let m = mean[s];
        sq[s] += x[r].iter().map(|v| (v.f64() - m).powi(2)).sum::<f64>();
    });
    let var = sq.iter().map(|s| s / per).collect();
    (mean, var)
}

/// `y = gamma * (x - mean) * rstd + beta` with per-slice mean/rstd.
pub(crate) fn normalize_apply<T: Scalar>(
    layout: SliceLayout,
    dims: Dims,
    x: &[T],
    mean: &[T],
    rstd: &[T],
    gamma: &[T],
    beta: &[T],
) -> Vec<T> {
    let mut y = vec![T::zero(); x.len()];
    layout.for_each_run(dims, |s, c, r| {
        let (m, k, g, b) = (mean[s], rstd[s], gamma[c], beta[c]);
        for (o, &v) in y[r.clone()].iter_mut().zip(&x[r]) {
            *o = g * (v - m) * k + b;
        }
    });
    y
}

/// Backward of [`normalize_apply`]; `through_stats` differentiates through the batch statistics.
#[allow(clippy::too_many_arguments)]
pub(crate) fn normalize_backward<T: Scalar>(
    layout: SliceLayout,
    dims: Dims,
    x: &[T],
    mean: &[T],
    rstd: &[T],
    gamma: &[T],
    dy: &[T],
    through_stats: bool,
    dx: Option<&mut [T]>,
    dgamma: Option<&mut [T]>,
    dbeta: Option<&mut [T]>,
) {
    let count = layout.count(dims);
    let per = (numel(dims) / count) as f64;
    if let Some(dgamma) = dgamma {
        layout.for_each_run(dims, |s, c, r| {
            let (m, k) = (mean[s], rstd[s]);
            let acc: T = x[r.clone()].iter().zip(&dy[r]).map(|(&v, &g)| g * (v - m) * k).sum();
            dgamma[c] = dgamma[c] + acc;
        });
    }
    if let Some(dbeta) = dbeta {
        layout.for_each_run(dims, |_, c, r| {
            dbeta[c] = dbeta[c] + dy[r].iter().copied().sum::<T>();
        });
    }
    if let Some(dx) = dx {
        // sums of dxhat and dxhat * xhat per slice
        let mut s1 = vec![0.0f64; count];
        let mut s2 = vec![0.0f64; count];
        if through_stats {
            layout.for_each_run(dims, |s, c, r| {
                let (m, k, g) = (mean[s].f64(), rstd[s].f64(), gamma[c].f64());
                for (&v, &d) in x[r.clone()].iter().zip(&dy[r]) {
                    let dh = d.f64() * g;
                    s1[s] += dh;
                    s2[s] += dh * (v.f64() - m) * k;
                }
            });
        }
        layout.for_each_run(dims, |s, c, r| {
            let (m, k, g) = (mean[s], rstd[s], gamma[c]);
            if through_stats {
                let a = T::of(s1[s] / per);
                let b = T::of(s2[s] / per);
                for ((o, &v), &d) in dx[r.clone()].iter_mut().zip(&x[r.clone()]).zip(&dy[r]) {
                    let xhat = (v - m) * k;
                    *o = *o + k * (d * g - a - xhat * b);
                }
            } else {
                for (o, &d) in dx[r.clone()].iter_mut().zip(&dy[r]) {
                    *o = *o + d * g * k;
                }
            }
        });
    }
}
