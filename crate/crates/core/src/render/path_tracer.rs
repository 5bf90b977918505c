use super::{check_dims, direct_light, primary_ray, render_rows, Geometry, SurfacePoint};
use crate::error::{Error, Result};
use crate::math::{Ray, Vec3};
use crate::pixels::Image;
use crate::rng::mix;
use crate::scene::Scene;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PTConfig {
    pub spp: u32,
    pub max_bounces: u32,
    pub seed: u64,
    /// Bounce index from which Russian roulette may terminate paths; `None` disables it.
    pub rr_start: Option<u32>,
    /// Uniform environment radiance seen by escaping rays. Test-only: never serialized.
    #[serde(skip)]
    pub uniform_environment: Option<f64>,
}

impl Default for PTConfig {
    fn default() -> Self {
        Self {
            spp: 256,
            max_bounces: 4,
            seed: 0,
            rr_start: None,
            uniform_environment: None,
        }
    }
}

impl PTConfig {
    pub fn validate(&self) -> Result<()> {
        if self.spp == 0 {
            return Err(Error::invalid("path_trace", "spp must be at least 1"));
        }
        Ok(())
    }
}

/// Counter-based uniform stream keyed by `(seed, pixel, sample)`.
///
/// Each draw is a SplitMix64 hash of the key and a counter, so a sample's
/// values do not depend on which thread renders it or in what order.
#[derive(Debug, Clone)]
pub struct SampleStream {
    key: u64,
    counter: u64,
}

impl SampleStream {
    pub fn new(seed: u64, pixel: u64, sample: u64) -> Self {
        Self {
            key: mix(mix(seed, pixel), sample),
            counter: 0,
        }
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.counter += 1;
        (mix(self.key, self.counter) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Cosine-weighted direction about `normal` (pdf `cos θ / π`).
pub fn sample_cosine_hemisphere(u1: f64, u2: f64, normal: Vec3) -> Vec3 {
    let r = u1.sqrt();
    let phi = 2.0 * std::f64::consts::PI * u2;
    let z = (1.0 - u1).max(0.0).sqrt();
    if r == 0.0 {
        return normal;
    }
    let (t, b) = normal.basis();
    (t * (r * phi.cos()) + b * (r * phi.sin()) + normal * z).normalized()
}

pub fn path_trace(scene: &Scene, cfg: &PTConfig, width: usize, height: usize) -> Result<Image> {
    check_dims("path_trace", width, height)?;
    cfg.validate()?;
    let geom = Geometry::from_scene(scene)?;
    path_trace_with(&geom, scene, cfg, width, height)
}

/// Path traces against a prebuilt [`Geometry`].
pub fn path_trace_with(geom: &Geometry, scene: &Scene, cfg: &PTConfig, width: usize, height: usize) -> Result<Image> {
    check_dims("path_trace", width, height)?;
    cfg.validate()?;
    let rows = render_rows(height, |y| {
        let mut row = vec![0f32; width * 3];
        for x in 0..width {
            let pixel = (y * width + x) as u64;
            let camera_ray = primary_ray(&scene.camera, width, height, x, y);
            let mut sum = Vec3::ZERO;
            for s in 0..cfg.spp {
                let mut rng = SampleStream::new(cfg.seed, pixel, s as u64);
                sum += radiance(geom, scene, cfg, camera_ray, &mut rng);
            }
            let mean = sum / cfg.spp as f64;
            row[x * 3..x * 3 + 3].copy_from_slice(&[mean.x as f32, mean.y as f32, mean.z as f32]);
        }
        row
    });
    Ok(Image::from_interleaved_rows(width, height, 3, &rows))
}

fn radiance(geom: &Geometry, scene: &Scene, cfg: &PTConfig, mut ray: Ray, rng: &mut SampleStream) -> Vec3 {
    let mut l = Vec3::ZERO;
    let mut throughput = Vec3::ONE;
    for bounce in 0..=cfg.max_bounces {
        let Some(hit) = geom.intersect(&ray, 0.0, f64::INFINITY) else {
            if let Some(env) = cfg.uniform_environment {
                l += throughput * env;
            }
            break;
        };
        let sp = SurfacePoint::new(geom, &ray, &hit);
        l += throughput.mul(direct_light(geom, &sp, &scene.light));
        if bounce == cfg.max_bounces {
            break;
        }
        let (u1, u2) = (rng.next_f64(), rng.next_f64());
        let dir = sample_cosine_hemisphere(u1, u2, sp.shading_normal);
        if dir.dot(sp.geometric_normal) <= 0.0 {
            break;
        }
        // albedo/π · cos / (cos/π)
        throughput = throughput.mul(sp.albedo);
        if let Some(start) = cfg.rr_start {
            let u = rng.next_f64();
            if bounce >= start {
                let q = throughput.max_component().min(0.95);
                if q <= 0.0 || u >= q {
                    break;
                }
                throughput = throughput / q;
            }
        }
        if throughput.max_component() <= 0.0 {
            break;
        }
        ray = sp.spawn(dir);
    }
    l
}
