use super::to_unit_image;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::metrics::{extract_features, fid, l1_metric, l2_metric, ssim, time_op, Method, MetricsReport, MetricsRow, SsimParams};
use crate::models::Generator;
use crate::pixels::Image;

/// Anything that maps a `(1, 12, H, W)` input to a `(1, 3, H, W)` image in `[-1, 1]`.
pub trait ImageTranslator {
    fn translate(&self, input: &Tensor<f32>) -> Result<Tensor<f32>>;
}

impl ImageTranslator for Generator<f32> {
    fn translate(&self, input: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.infer(input)
    }
}

/// One held-out image set with the renderer timings recorded at generation.
#[derive(Debug, Clone)]
pub struct EvalItem {
    pub id: String,
    /// `(1, 12, H, W)` network input.
    pub input: Tensor<f32>,
    /// Rasterized direct illumination in `[0, 1]`.
    pub direct: Image,
    /// Path-traced reference in `[0, 1]`.
    pub target: Image,
    pub gbuffer_seconds: f64,
    pub path_trace_seconds: f64,
}

/// Scores raster, GAN and ray-traced images against the ray-traced target.
///
/// GAN time is the G-buffer time plus the mean of `timing_reps` inference runs.
pub fn evaluate<M: ImageTranslator + ?Sized>(model: &M, items: &[EvalItem], timing_reps: usize) -> Result<MetricsReport> {
    if items.is_empty() {
        return Err(Error::invalid("evaluate", "empty split"));
    }
    let params = SsimParams::default();
    let mut report = MetricsReport::default();
    let (mut raster, mut gan, mut truth) = (Vec::new(), Vec::new(), Vec::new());
    for it in items {
        let [_, _, h, w] = it.input.dims();
        if (it.target.width, it.target.height) != (w, h) || (it.direct.width, it.direct.height) != (w, h) {
            return Err(Error::Item {
                id: it.id.clone(),
                msg: format!("resolution mismatch: input {w}x{h}, target {}x{}", it.target.width, it.target.height),
            });
        }
        let out = model.translate(&it.input)?;
        let timing = time_op(timing_reps.max(1), || model.translate(&it.input));
        let pred = to_unit_image(&out)?;
        let direct = it.direct.clamped01();
        let target = it.target.clamped01();
        for (method, img, t) in [
            (Method::Raster, &direct, it.gbuffer_seconds),
            (Method::Gan, &pred, it.gbuffer_seconds + timing.mean),
            (Method::RayTraced, &target, it.path_trace_seconds),
        ] {
            report.rows.push(MetricsRow {
                id: it.id.clone(),
                method,
                l1: l1_metric(img, &target)?,
                l2: l2_metric(img, &target)?,
                ssim: ssim(img, &target, &params)?,
                time_seconds: t,
            });
        }
        raster.push(direct);
        gan.push(pred);
        truth.push(target);
    }
    let truth_stats = extract_features(&truth)?;
    for (method, set) in [(Method::Raster, &raster), (Method::Gan, &gan), (Method::RayTraced, &truth)] {
        report.fid.push((method, fid(&extract_features(set)?, &truth_stats)?));
    }
    Ok(report)
}
