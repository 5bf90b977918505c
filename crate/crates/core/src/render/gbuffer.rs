use super::{check_dims, direct_light, primary_ray, render_rows, Geometry, SurfacePoint};
use crate::error::Result;
use crate::pixels::Image;
use crate::scene::Scene;

/// The four conditioning images of one view.
#[derive(Debug, Clone, PartialEq)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    /// Linear radiance from the directional light, RGB.
    pub direct: Image,
    /// Ray distance normalized over hit pixels to `[0, 1]`; misses are 1.
    pub depth: Image,
    /// World normal encoded as `(n + 1) / 2`.
    pub normal: Image,
    pub albedo: Image,
}

pub fn render_gbuffer(scene: &Scene, width: usize, height: usize) -> Result<GBuffer> {
    check_dims("render_gbuffer", width, height)?;
    let geom = Geometry::from_scene(scene)?;
    render_gbuffer_with(&geom, scene, width, height)
}

/// Renders against a prebuilt [`Geometry`].
pub fn render_gbuffer_with(geom: &Geometry, scene: &Scene, width: usize, height: usize) -> Result<GBuffer> {
    check_dims("render_gbuffer", width, height)?;
    // per pixel: direct rgb, t (NaN on miss), normal xyz, albedo rgb
    const K: usize = 10;
    let rows = render_rows(height, |y| {
        let mut row = vec![0f32; width * K];
        for x in 0..width {
            let px = &mut row[x * K..(x + 1) * K];
            let ray = primary_ray(&scene.camera, width, height, x, y);
            match geom.intersect(&ray, 0.0, f64::INFINITY) {
                Some(hit) => {
                    let sp = SurfacePoint::new(geom, &ray, &hit);
                    let d = direct_light(geom, &sp, &scene.light);
                    let n = sp.shading_normal;
                    px.copy_from_slice(&[
                        d.x as f32,
                        d.y as f32,
                        d.z as f32,
                        sp.t as f32,
                        ((n.x + 1.0) * 0.5) as f32,
                        ((n.y + 1.0) * 0.5) as f32,
                        ((n.z + 1.0) * 0.5) as f32,
                        sp.albedo.x as f32,
                        sp.albedo.y as f32,
                        sp.albedo.z as f32,
                    ]);
                }
                None => px.copy_from_slice(&[0.0, 0.0, 0.0, f32::NAN, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0]),
            }
        }
        row
    });
    let all = Image::from_interleaved_rows(width, height, K, &rows);
    let plane = |c: usize| all.plane(c).to_vec();
    let cat = |cs: [usize; 3]| cs.iter().flat_map(|&c| plane(c)).collect::<Vec<f32>>();

    let t = plane(3);
    let (lo, hi) = t
        .iter()
        .filter(|v| !v.is_nan())
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    let depth: Vec<f32> = t
        .iter()
        .map(|&v| {
            if v.is_nan() {
                1.0
            } else if range > 0.0 {
                ((v - lo) / range).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();

    Ok(GBuffer {
        width,
        height,
        direct: Image::from_data(width, height, 3, cat([0, 1, 2]))?,
        depth: Image::from_data(width, height, 1, depth)?,
        normal: Image::from_data(width, height, 3, cat([4, 5, 6]))?,
        albedo: Image::from_data(width, height, 3, cat([7, 8, 9]))?,
    })
}
