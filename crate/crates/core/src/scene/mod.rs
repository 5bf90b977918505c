//! Procedural room scenes: four walls and a floor, randomized primitive
//! objects, one directional light and a perturbed camera.

pub mod mesh;

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;
pub use mesh::{mesh_primitive, Tessellation, TriangleMesh};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    Cube,
    Cylinder,
    Cone,
    UvSphere,
    IcoSphere,
    Torus,
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 6] = [
        PrimitiveKind::Cube,
        PrimitiveKind::Cylinder,
        PrimitiveKind::Cone,
        PrimitiveKind::UvSphere,
        PrimitiveKind::IcoSphere,
        PrimitiveKind::Torus,
    ];

    /// Radius of the origin-centered sphere enclosing the unit-scale mesh.
    pub fn bounding_radius(self) -> f64 {
        match self {
            PrimitiveKind::Cube => 3f64.sqrt(),
            PrimitiveKind::Cylinder | PrimitiveKind::Cone => 2f64.sqrt(),
            PrimitiveKind::UvSphere | PrimitiveKind::IcoSphere => 1.0,
            PrimitiveKind::Torus => mesh::TORUS_MAJOR + mesh::TORUS_MINOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub kind: PrimitiveKind,
    pub position: Vec3,
    /// XYZ Euler angles in radians.
    pub rotation: Vec3,
    pub scale: f64,
    pub albedo: Vec3,
}

impl SceneObject {
    pub fn bounding_radius(&self) -> f64 {
        self.kind.bounding_radius() * self.scale
    }
}

/// Planar parallelogram `origin + a*edge_u + b*edge_v`, `a, b ∈ [0,1]`, facing `edge_u × edge_v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    pub origin: Vec3,
    pub edge_u: Vec3,
    pub edge_v: Vec3,
    pub albedo: Vec3,
}

impl Quad {
    pub fn normal(&self) -> Vec3 {
        self.edge_u.cross(self.edge_v).normalized()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalLight {
    /// Unit direction the light travels in (pointing away from the light).
    pub direction: Vec3,
    pub intensity: Vec3,
}

impl DirectionalLight {
    pub fn to_light(&self) -> Vec3 {
        -self.direction
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub position: Vec3,
    /// Rotation about the camera's horizontal axis; positive looks up.
    pub pitch_deg: f64,
    /// Rotation about the world `z` axis, in `[0, 360)`.
    pub yaw_deg: f64,
    pub vfov_deg: f64,
}

impl Camera {
    /// Orthonormal `(forward, right, up)` frame.
    pub fn frame(&self) -> (Vec3, Vec3, Vec3) {
        let (p, y) = (self.pitch_deg.to_radians(), self.yaw_deg.to_radians());
        let forward = Vec3::new(p.cos() * y.cos(), p.cos() * y.sin(), p.sin());
        let right = forward.cross(Vec3::Z).normalized();
        let up = right.cross(forward);
        (forward, right, up)
    }
}

/// Everything both renderers need. Generated scenes use four walls and a
/// floor for `room`, but any set of quads is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub room: Vec<Quad>,
    pub objects: Vec<SceneObject>,
    pub light: DirectionalLight,
    pub camera: Camera,
    pub tessellation: Tessellation,
}

/// Distributions for [`generate_scene`]. Lengths in meters, angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub min_objects: usize,
    pub max_objects: usize,
    /// Half of the square room's side length.
    pub room_half_extent: f64,
    pub wall_height: f64,
    pub surface_albedo_min: f64,
    pub surface_albedo_max: f64,
    pub object_albedo_min: f64,
    pub object_albedo_max: f64,
    pub object_scale_min: f64,
    pub object_scale_max: f64,
    /// Highest allowed object center.
    pub object_max_height: f64,
    pub camera_height: f64,
    pub camera_base_pitch_deg: f64,
    /// Camera pitch is the base pitch plus a uniform offset in `±pitch_jitter_deg`.
    pub camera_pitch_jitter_deg: f64,
    pub camera_yaw_min_deg: f64,
    pub camera_yaw_max_deg: f64,
    pub camera_vfov_deg: f64,
    /// Minimum gap between the camera and any object's bounding sphere.
    pub camera_clearance: f64,
    pub light_elevation_min_deg: f64,
    pub light_elevation_max_deg: f64,
    pub light_intensity: f64,
    pub tessellation: Tessellation,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            min_objects: 50,
            max_objects: 250,
            room_half_extent: 5.0,
            wall_height: 3.0,
            surface_albedo_min: 0.1,
            surface_albedo_max: 0.9,
            object_albedo_min: 0.05,
            object_albedo_max: 0.95,
            object_scale_min: 0.12,
            object_scale_max: 0.4,
            object_max_height: 2.0,
            camera_height: 1.7,
            camera_base_pitch_deg: -15.0,
            camera_pitch_jitter_deg: 10.0,
            camera_yaw_min_deg: 0.0,
            camera_yaw_max_deg: 360.0,
            camera_vfov_deg: 60.0,
            camera_clearance: 0.4,
            light_elevation_min_deg: 40.0,
            light_elevation_max_deg: 75.0,
            light_intensity: 2.5,
            tessellation: Tessellation::default(),
        }
    }
}

fn check_range(name: &str, lo: f64, hi: f64) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::Config(format!("{name}: min {lo} exceeds max {hi}")));
    }
    Ok(())
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_objects > self.max_objects {
            return Err(Error::Config(format!(
                "min_objects {} exceeds max_objects {}",
                self.min_objects, self.max_objects
            )));
        }
        check_range("surface albedo", self.surface_albedo_min, self.surface_albedo_max)?;
        check_range("object albedo", self.object_albedo_min, self.object_albedo_max)?;
        check_range("object scale", self.object_scale_min, self.object_scale_max)?;
        check_range("camera yaw", self.camera_yaw_min_deg, self.camera_yaw_max_deg)?;
        check_range("light elevation", self.light_elevation_min_deg, self.light_elevation_max_deg)?;
        for (name, lo, hi) in [
            ("surface albedo", self.surface_albedo_min, self.surface_albedo_max),
            ("object albedo", self.object_albedo_min, self.object_albedo_max),
        ] {
            if lo < 0.0 || hi > 1.0 {
                return Err(Error::Config(format!("{name} must lie in [0,1]")));
            }
        }
        if self.object_scale_min <= 0.0 {
            return Err(Error::Config("object scale must be positive".into()));
        }
        if !(self.camera_vfov_deg > 0.0 && self.camera_vfov_deg < 180.0) {
            return Err(Error::Config("camera vfov must lie in (0,180)".into()));
        }
        if self.light_elevation_min_deg <= 0.0 || self.light_elevation_max_deg > 90.0 {
            return Err(Error::Config("light elevation must lie in (0,90]".into()));
        }
        if self.light_intensity < 0.0 {
            return Err(Error::Config("light intensity must be non-negative".into()));
        }
        // The largest object must fit between the floor and its height cap, and inside the walls.
        let r = self.object_scale_max * PrimitiveKind::Cube.bounding_radius();
        if 2.0 * r > self.object_max_height || self.object_max_height + r > self.wall_height || r >= self.room_half_extent {
            return Err(Error::Config("largest object does not fit inside the room".into()));
        }
        if self.camera_height <= 0.0 || self.camera_height >= self.wall_height {
            return Err(Error::Config("camera must be inside the room".into()));
        }
        self.tessellation.validate()
    }
}

fn albedo(rng: &mut impl Rng, lo: f64, hi: f64) -> Vec3 {
    Vec3::new(rng.gen_range(lo..=hi), rng.gen_range(lo..=hi), rng.gen_range(lo..=hi))
}

/// Floor at `z = 0` and four walls, all facing the room interior.
fn room(cfg: &SceneConfig, rng: &mut impl Rng) -> Vec<Quad> {
    let (e, h) = (cfg.room_half_extent, cfg.wall_height);
    let side = 2.0 * e;
    let (lo, hi) = (cfg.surface_albedo_min, cfg.surface_albedo_max);
    let mut quad = |origin, edge_u, edge_v| Quad {
        origin,
        edge_u,
        edge_v,
        albedo: albedo(rng, lo, hi),
    };
    vec![
        quad(Vec3::new(-e, -e, 0.0), Vec3::X * side, Vec3::Y * side),
        quad(Vec3::new(-e, -e, 0.0), Vec3::Z * h, Vec3::X * side),
        quad(Vec3::new(e, -e, 0.0), Vec3::Z * h, Vec3::Y * side),
        quad(Vec3::new(e, e, 0.0), Vec3::Z * h, Vec3::X * -side),
        quad(Vec3::new(-e, e, 0.0), Vec3::Z * h, Vec3::Y * -side),
    ]
}

/// Builds a random scene as a pure function of `(seed, cfg)`.
pub fn generate_scene(seed: u64, cfg: &SceneConfig) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = crate::rng::rng(seed);
    let room = room(cfg, &mut rng);

    let pitch = cfg.camera_base_pitch_deg + rng.gen_range(-cfg.camera_pitch_jitter_deg..=cfg.camera_pitch_jitter_deg);
    let yaw = if cfg.camera_yaw_max_deg > cfg.camera_yaw_min_deg {
        rng.gen_range(cfg.camera_yaw_min_deg..cfg.camera_yaw_max_deg)
    } else {
        cfg.camera_yaw_min_deg
    };
    let camera = Camera {
        position: Vec3::new(0.0, 0.0, cfg.camera_height),
        pitch_deg: pitch,
        yaw_deg: yaw,
        vfov_deg: cfg.camera_vfov_deg,
    };

    let elevation = rng
        .gen_range(cfg.light_elevation_min_deg..=cfg.light_elevation_max_deg)
        .to_radians();
    let azimuth = rng.gen_range(0.0..TAU);
    let to_light = Vec3::new(elevation.cos() * azimuth.cos(), elevation.cos() * azimuth.sin(), elevation.sin());
    let light = DirectionalLight {
        direction: -to_light.normalized(),
        intensity: Vec3::splat(cfg.light_intensity),
    };

    let count = rng.gen_range(cfg.min_objects..=cfg.max_objects);
    let objects = (0..count)
        .map(|_| {
            let kind = PrimitiveKind::ALL[rng.gen_range(0..PrimitiveKind::ALL.len())];
            let scale = rng.gen_range(cfg.object_scale_min..=cfg.object_scale_max);
            let r = kind.bounding_radius() * scale;
            let span = cfg.room_half_extent - r;
            let position = loop {
                let p = Vec3::new(
                    rng.gen_range(-span..=span),
                    rng.gen_range(-span..=span),
                    rng.gen_range(r..=cfg.object_max_height.max(r)),
                );
                if (p - camera.position).length() >= r + cfg.camera_clearance {
                    break p;
                }
            };
            let rotation = Vec3::new(rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
            SceneObject {
                kind,
                position,
                rotation,
                scale,
                albedo: albedo(&mut rng, cfg.object_albedo_min, cfg.object_albedo_max),
            }
        })
        .collect();

    Ok(Scene {
        room,
        objects,
        light,
        camera,
        tessellation: cfg.tessellation,
    })
}
