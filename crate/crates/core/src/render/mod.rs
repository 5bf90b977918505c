//! Ray-cast G-buffer renderer and Monte-Carlo path tracer sharing one BVH.

mod bvh;
mod gbuffer;
mod geometry;
mod path_tracer;

pub use bvh::{brute_force_intersect, build_bvh, Aabb, Bvh, BvhNode, Hit};
pub use gbuffer::{render_gbuffer, render_gbuffer_with, GBuffer};
pub use geometry::{scene_triangles, Geometry, Triangle};
pub use path_tracer::{path_trace, path_trace_with, sample_cosine_hemisphere, PTConfig, SampleStream};

use crate::error::{Error, Result};
use crate::math::{Ray, Vec3};
use crate::scene::{Camera, DirectionalLight};
use rayon::prelude::*;

/// Offset applied along the geometric normal when spawning secondary rays.
pub const RAY_EPSILON: f64 = 1e-6;

fn check_dims(op: &'static str, width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(op, format!("image size {width}x{height} must be at least 1x1")));
    }
    Ok(())
}

/// Pinhole camera ray through the center of pixel `(x, y)`; `y = 0` is the top row.
pub fn primary_ray(camera: &Camera, width: usize, height: usize, x: usize, y: usize) -> Ray {
    let (forward, right, up) = camera.frame();
    let tan_half = (camera.vfov_deg.to_radians() * 0.5).tan();
    let aspect = width as f64 / height as f64;
    let sx = ((x as f64 + 0.5) / width as f64 * 2.0 - 1.0) * tan_half * aspect;
    let sy = (1.0 - (y as f64 + 0.5) / height as f64 * 2.0) * tan_half;
    Ray::new(camera.position, (forward + right * sx + up * sy).normalized())
}

/// Shading data at a ray hit; both normals face the incoming ray.
#[derive(Debug, Clone, Copy)]
pub struct SurfacePoint {
    pub position: Vec3,
    pub geometric_normal: Vec3,
    pub shading_normal: Vec3,
    pub albedo: Vec3,
    pub t: f64,
}

impl SurfacePoint {
    pub fn new(geom: &Geometry, ray: &Ray, hit: &Hit) -> Self {
        let tri = &geom.triangles[hit.triangle as usize];
        let w = 1.0 - hit.u - hit.v;
        let mut ng = tri.geometric_normal();
        if ng.dot(ray.dir) > 0.0 {
            ng = -ng;
        }
        let ns = tri.normals[0] * w + tri.normals[1] * hit.u + tri.normals[2] * hit.v;
        let mut ns = if ns.length() > 1e-12 { ns.normalized() } else { ng };
        if ns.dot(ray.dir) > 0.0 {
            ns = -ns;
        }
        Self {
            position: ray.at(hit.t),
            geometric_normal: ng,
            shading_normal: ns,
            albedo: tri.albedo,
            t: hit.t,
        }
    }

    pub fn spawn(&self, dir: Vec3) -> Ray {
        let side = if dir.dot(self.geometric_normal) >= 0.0 { 1.0 } else { -1.0 };
        Ray::new(self.position + self.geometric_normal * (RAY_EPSILON * side), dir)
    }
}

/// Lambertian response to the directional light: `albedo/π · I · max(0, n·l) · visibility`.
pub fn direct_light(geom: &Geometry, sp: &SurfacePoint, light: &DirectionalLight) -> Vec3 {
    let l = light.to_light().normalized();
    let cos = sp.shading_normal.dot(l);
    if cos <= 0.0 || light.intensity.max_component() <= 0.0 {
        return Vec3::ZERO;
    }
    if geom.occluded(&sp.spawn(l), 0.0, f64::INFINITY) {
        return Vec3::ZERO;
    }
    sp.albedo.mul(light.intensity) * (cos / std::f64::consts::PI)
}

/// Evaluates `f` for every row in parallel; results are in row order regardless of scheduling.
fn render_rows<F>(height: usize, f: F) -> Vec<Vec<f32>>
where
    F: Fn(usize) -> Vec<f32> + Sync + Send,
{
    (0..height).into_par_iter().map(f).collect()
}
