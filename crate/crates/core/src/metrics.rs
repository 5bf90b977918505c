//! Image-quality metrics, timing, and the three-way comparison report.

use crate::autodiff::{functional, Activation, Tensor};
use crate::error::{Error, Result};
use crate::pixels::Image;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::time::Instant;

fn check_same(op: &'static str, a: &Image, b: &Image) -> Result<()> {
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels) {
        return Err(Error::shape(op, (a.channels, a.height, a.width), (b.channels, b.height, b.width)));
    }
    Ok(())
}

/// Sum of absolute differences over all pixels and channels.
pub fn l1_metric(pred: &Image, truth: &Image) -> Result<f64> {
    check_same("l1_metric", pred, truth)?;
    Ok(pred.data.iter().zip(&truth.data).map(|(&p, &t)| (t as f64 - p as f64).abs()).sum())
}

/// Sum of squared differences over all pixels and channels.
pub fn l2_metric(pred: &Image, truth: &Image) -> Result<f64> {
    check_same("l2_metric", pred, truth)?;
    Ok(pred.data.iter().zip(&truth.data).map(|(&p, &t)| (t as f64 - p as f64).powi(2)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    fn kernel(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let k: Vec<f64> = (0..self.window)
            .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = k.iter().sum();
        k.into_iter().map(|v| v / s).collect()
    }
}

/// Separable valid-mode filtering of an `h x w` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity over pixels and channels.
pub fn ssim(x: &Image, y: &Image, params: &SsimParams) -> Result<f64> {
    check_same("ssim", x, y)?;
    if x.width < params.window || x.height < params.window {
        return Err(Error::invalid(
            "ssim",
            format!("{}x{} image smaller than the {}-pixel window", x.width, x.height, params.window),
        ));
    }
    let k = params.kernel();
    let (c1, c2) = (params.c1(), params.c2());
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..x.channels {
        let a: Vec<f64> = x.plane(c).iter().map(|&v| v as f64).collect();
        let b: Vec<f64> = y.plane(c).iter().map(|&v| v as f64).collect();
        let f = |p: &[f64]| filter_valid(p, x.width, x.height, &k);
        let sq = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<f64>>();
        let (mx, my) = (f(&a), f(&b));
        let (exx, eyy, exy) = (f(&sq(&a, &a)), f(&sq(&b, &b)), f(&sq(&a, &b)));
        for i in 0..mx.len() {
            let vx = exx[i] - mx[i] * mx[i];
            let vy = eyy[i] - my[i] * my[i];
            let cxy = exy[i] - mx[i] * my[i];
            let num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2);
            let den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Frozen random convolutional embedding used in place of an Inception network.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    layers: Vec<(Tensor<f64>, Vec<f64>)>,
}

pub const FEATURE_DIM: usize = 64;
pub const FEATURE_SEED: u64 = 0x05ee_df1d;

impl FeatureExtractor {
    /// Four stride-2 conv stages `3 → 16 → 32 → 64 → 64` with He-normal weights.
    pub fn new(seed: u64) -> Self {
        let mut rng = crate::rng::keyed(seed, 0xfea7);
        let plan = [3, 16, 32, 64, FEATURE_DIM];
        let layers = plan
            .windows(2)
            .map(|io| {
                let (cin, cout) = (io[0], io[1]);
                let dist = Normal::new(0.0, (2.0 / (cin * 16) as f64).sqrt()).expect("valid normal");
                let w = Tensor::from_fn([cout, cin, 4, 4], |_| dist.sample(&mut rng));
                (w, vec![0.0; cout])
            })
            .collect();
        Self { layers }
    }

    /// Globally pooled features of a 3-channel `[0,1]` image.
    pub fn features(&self, img: &Image) -> Result<Vec<f64>> {
        if img.channels != 3 {
            return Err(Error::shape("extract_features", img.channels, 3));
        }
        let mut h: Tensor<f64> = img.to_tensor().cast();
        for (w, b) in &self.layers {
            h = functional::conv2d(&h, w, Some(b), 2, 1)?;
            h = functional::activation(&h, Activation::LEAKY)?;
        }
        let [_, c, hh, ww] = h.dims();
        let n = (hh * ww) as f64;
        Ok((0..c).map(|k| h.data()[k * hh * ww..(k + 1) * hh * ww].iter().sum::<f64>() / n).collect())
    }
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new(FEATURE_SEED)
    }
}

/// Mean and unbiased covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl FeatureStats {
    pub fn from_features(features: &[Vec<f64>]) -> Result<Self> {
        let n = features.len();
        if n == 0 {
            return Err(Error::invalid("extract_features", "empty image set"));
        }
        let d = features[0].len();
        if features.iter().any(|f| f.len() != d) {
            return Err(Error::invalid("extract_features", "ragged feature vectors"));
        }
        let mut mu = DVector::zeros(d);
        for f in features {
            mu += DVector::from_column_slice(f);
        }
        mu /= n as f64;
        let mut sigma = DMatrix::zeros(d, d);
        if n > 1 {
            for f in features {
                let c = DVector::from_column_slice(f) - &mu;
                sigma += &c * c.transpose();
            }
            sigma /= (n - 1) as f64;
        }
        Ok(Self { mu, sigma })
    }
}

pub fn extract_features(images: &[Image]) -> Result<FeatureStats> {
    extract_features_with(&FeatureExtractor::default(), images)
}

pub fn extract_features_with(extractor: &FeatureExtractor, images: &[Image]) -> Result<FeatureStats> {
    if let Some(first) = images.first() {
        if images.iter().any(|i| (i.width, i.height) != (first.width, first.height)) {
            return Err(Error::invalid("extract_features", "images differ in resolution"));
        }
    }
    let feats = images.iter().map(|i| extractor.features(i)).collect::<Result<Vec<_>>>()?;
    FeatureStats::from_features(&feats)
}

/// Square root of a symmetric PSD matrix; negative eigenvalues are clamped to zero.
pub fn sqrtm_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Fréchet distance between two Gaussian feature summaries.
pub fn fid(a: &FeatureStats, b: &FeatureStats) -> Result<f64> {
    if a.mu.len() != b.mu.len() || a.sigma.shape() != b.sigma.shape() {
        return Err(Error::shape("fid", a.mu.len(), b.mu.len()));
    }
    let diff = (&a.mu - &b.mu).norm_squared();
    let ra = sqrtm_psd(&a.sigma);
    let cross = sqrtm_psd(&(&ra * &b.sigma * &ra));
    let tr = a.sigma.trace() + b.sigma.trace() - 2.0 * cross.trace();
    Ok((diff + tr).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean: f64,
    pub std: f64,
    pub runs: Vec<f64>,
}

/// Runs `f` once to warm up, then `repetitions` timed times.
pub fn time_op<R>(repetitions: usize, mut f: impl FnMut() -> R) -> Timing {
    std::hint::black_box(f());
    let runs: Vec<f64> = (0..repetitions)
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(f());
            t.elapsed().as_secs_f64()
        })
        .collect();
    let n = runs.len().max(1) as f64;
    let mean = runs.iter().sum::<f64>() / n;
    let std = if runs.len() > 1 {
        (runs.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Timing { mean, std, runs }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Raster,
    Gan,
    RayTraced,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Raster, Method::Gan, Method::RayTraced];

    pub fn label(self) -> &'static str {
        match self {
            Method::Raster => "Rasterisation",
            Method::Gan => "GAN",
            Method::RayTraced => "Ray-Traced",
        }
    }

    fn key(self) -> &'static str {
        match self {
            Method::Raster => "raster",
            Method::Gan => "gan",
            Method::RayTraced => "ray_traced",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub id: String,
    pub method: Method,
    pub l1: f64,
    pub l2: f64,
    pub ssim: f64,
    pub time_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MethodSummary {
    pub time_seconds: f64,
    pub l1: f64,
    pub l2: f64,
    pub ssim: f64,
    pub fid: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    /// Per-method FID against the ray-traced set.
    pub fid: Vec<(Method, f64)>,
}

impl MetricsReport {
    pub fn summary(&self, method: Method) -> MethodSummary {
        let rows: Vec<&MetricsRow> = self.rows.iter().filter(|r| r.method == method).collect();
        let n = rows.len().max(1) as f64;
        let mean = |f: fn(&MetricsRow) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / n;
        MethodSummary {
            time_seconds: mean(|r| r.time_seconds),
            l1: mean(|r| r.l1),
            l2: mean(|r| r.l2),
            ssim: mean(|r| r.ssim),
            fid: self.fid.iter().find(|(m, _)| *m == method).map_or(f64::NAN, |(_, v)| *v),
        }
    }

    /// Number of images evaluated per method.
    pub fn items(&self, method: Method) -> usize {
        self.rows.iter().filter(|r| r.method == method).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,method,l1,l2,ssim,time_seconds\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{}", r.id, r.method.key(), r.l1, r.l2, r.ssim, r.time_seconds);
        }
        for (m, v) in &self.fid {
            let _ = writeln!(s, "fid,{},,,,{v}", m.key());
        }
        s
    }

    /// Text table with metric rows and method columns.
    pub fn to_table(&self) -> String {
        let sums: Vec<MethodSummary> = Method::ALL.iter().map(|&m| self.summary(m)).collect();
        let mut s = format!("{:<8}", "Metric");
        for m in Method::ALL {
            let _ = write!(s, "{:>16}", m.label());
        }
        s.push('\n');
        let rows: [(&str, fn(&MethodSummary) -> f64); 5] = [
            ("Time", |m| m.time_seconds),
            ("L1", |m| m.l1),
            ("L2", |m| m.l2),
            ("SSIM", |m| m.ssim),
            ("FID", |m| m.fid),
        ];
        for (name, f) in rows {
            let _ = write!(s, "{name:<8}");
            for m in &sums {
                let _ = write!(s, "{:>16.6}", f(m));
            }
            s.push('\n');
        }
        s
    }
}
