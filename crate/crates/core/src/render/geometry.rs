use super::bvh::{build_bvh, Bvh, Hit};
use crate::error::Result;
use crate::math::{Mat3, Ray, Vec3};
use crate::scene::{mesh_primitive, Scene};

/// World-space triangle with per-vertex shading normals and a Lambertian albedo.
#[derive(Debug, Clone)]
pub struct Triangle {
    pub p0: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
    pub normals: [Vec3; 3],
    pub albedo: Vec3,
    pub(crate) degenerate: bool,
}

impl Triangle {
    pub fn new(p0: Vec3, p1: Vec3, p2: Vec3, normals: [Vec3; 3], albedo: Vec3) -> Self {
        let (e1, e2) = (p1 - p0, p2 - p0);
        let area2 = e1.cross(e2).length();
        Self {
            p0,
            e1,
            e2,
            normals,
            albedo,
            degenerate: !(area2 > 1e-14),
        }
    }

    /// Flat-shaded triangle.
    pub fn flat(p0: Vec3, p1: Vec3, p2: Vec3, albedo: Vec3) -> Self {
        let n = (p1 - p0).cross(p2 - p0);
        let n = if n.length() > 0.0 { n.normalized() } else { Vec3::Z };
        Self::new(p0, p1, p2, [n; 3], albedo)
    }

    pub fn vertices(&self) -> [Vec3; 3] {
        [self.p0, self.p0 + self.e1, self.p0 + self.e2]
    }

    pub fn centroid(&self) -> Vec3 {
        self.p0 + (self.e1 + self.e2) / 3.0
    }

    pub fn geometric_normal(&self) -> Vec3 {
        self.e1.cross(self.e2).normalized()
    }

    /// Möller–Trumbore; returns `(t, u, v)` for hits with `t` in `(t_min, t_max)`.
    #[inline]
    pub fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<(f64, f64, f64)> {
        if self.degenerate {
            return None;
        }
        let pvec = ray.dir.cross(self.e2);
        let det = self.e1.dot(pvec);
        if det.abs() < 1e-18 {
            return None;
        }
        let inv = 1.0 / det;
        let tvec = ray.origin - self.p0;
        let u = tvec.dot(pvec) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let qvec = tvec.cross(self.e1);
        let v = ray.dir.dot(qvec) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = self.e2.dot(qvec) * inv;
        (t > t_min && t < t_max).then_some((t, u, v))
    }
}

/// Flattened triangle soup of a scene plus its acceleration structure.
#[derive(Debug)]
pub struct Geometry {
    pub triangles: Vec<Triangle>,
    pub bvh: Bvh,
}

impl Geometry {
    pub fn new(triangles: Vec<Triangle>) -> Result<Self> {
        let bvh = build_bvh(&triangles)?;
        Ok(Self { triangles, bvh })
    }

    pub fn from_scene(scene: &Scene) -> Result<Self> {
        Self::new(scene_triangles(scene)?)
    }

    pub fn intersect(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        self.bvh.intersect(&self.triangles, ray, t_min, t_max)
    }

    pub fn occluded(&self, ray: &Ray, t_min: f64, t_max: f64) -> bool {
        self.bvh.occluded(&self.triangles, ray, t_min, t_max)
    }
}

/// World-space triangles of the room quads and every instanced object.
pub fn scene_triangles(scene: &Scene) -> Result<Vec<Triangle>> {
    let mut tris = Vec::new();
    for q in &scene.room {
        let (a, b, c, d) = (q.origin, q.origin + q.edge_u, q.origin + q.edge_u + q.edge_v, q.origin + q.edge_v);
        let n = q.normal();
        tris.push(Triangle::new(a, b, c, [n; 3], q.albedo));
        tris.push(Triangle::new(a, c, d, [n; 3], q.albedo));
    }
    let mut cache = std::collections::HashMap::new();
    for o in &scene.objects {
        if let std::collections::hash_map::Entry::Vacant(e) = cache.entry(o.kind) {
            e.insert(mesh_primitive(o.kind, &scene.tessellation)?);
        }
        let mesh = &cache[&o.kind];
        let rot = Mat3::from_euler_xyz(o.rotation.x, o.rotation.y, o.rotation.z);
        let world = |p: Vec3| rot.apply(p) * o.scale + o.position;
        for t in &mesh.triangles {
            let [a, b, c] = t.map(|i| i as usize);
            tris.push(Triangle::new(
                world(mesh.vertices[a]),
                world(mesh.vertices[b]),
                world(mesh.vertices[c]),
                [a, b, c].map(|i| rot.apply(mesh.normals[i])),
                o.albedo,
            ));
        }
    }
    Ok(tris)
}
