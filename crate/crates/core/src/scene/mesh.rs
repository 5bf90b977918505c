//! Canonical unit-scale meshes for the six primitive kinds.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::PrimitiveKind;
use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

/// Segment counts used when meshing primitives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tessellation {
    /// Divisions around the main axis.
    pub segments: usize,
    /// Latitude rings of the UV sphere and tube divisions of the torus.
    pub rings: usize,
    pub ico_subdivisions: usize,
}

impl Default for Tessellation {
    fn default() -> Self {
        Self {
            segments: 16,
            rings: 8,
            ico_subdivisions: 1,
        }
    }
}

impl Tessellation {
    pub fn validate(&self) -> Result<()> {
        if self.segments < 3 || self.rings < 3 {
            return Err(Error::Config(format!(
                "tessellation needs at least 3 segments and rings, got {}/{}",
                self.segments, self.rings
            )));
        }
        Ok(())
    }
}

pub const TORUS_MAJOR: f64 = 1.0;
pub const TORUS_MINOR: f64 = 0.25;

impl TriangleMesh {
    fn vertex(&mut self, p: Vec3, n: Vec3) -> u32 {
        self.vertices.push(p);
        self.normals.push(n.normalized());
        (self.vertices.len() - 1) as u32
    }

    fn tri(&mut self, a: u32, b: u32, c: u32) {
        self.triangles.push([a, b, c]);
    }

    pub fn surface_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]);
                0.5 * (b - a).cross(c - a).length()
            })
            .sum()
    }

    /// True when, after welding coincident positions, every edge borders exactly two triangles.
    pub fn is_watertight(&self) -> bool {
        let key = |p: Vec3| ((p.x * 1e6).round() as i64, (p.y * 1e6).round() as i64, (p.z * 1e6).round() as i64);
        let mut ids = HashMap::new();
        let welded: Vec<usize> = self
            .vertices
            .iter()
            .map(|&p| {
                let n = ids.len();
                *ids.entry(key(p)).or_insert(n)
            })
            .collect();
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            let w = t.map(|i| welded[i as usize]);
            if w[0] == w[1] || w[1] == w[2] || w[0] == w[2] {
                continue;
            }
            for k in 0..3 {
                let (a, b) = (w[k], w[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        edges.values().all(|&c| c == 2)
    }
}

/// Unit-scale mesh of `kind` centered at the origin with outward normals.
///
/// Sizes: cube `[-1,1]^3`; cylinder radius 1 over `z ∈ [-1,1]`; cone base radius 1 at
/// `z = -1`, apex at `z = 1`; spheres radius 1; torus major radius 1, minor radius 0.25.
pub fn mesh_primitive(kind: PrimitiveKind, tess: &Tessellation) -> Result<TriangleMesh> {
    tess.validate()?;
    Ok(match kind {
        PrimitiveKind::Cube => cube(),
        PrimitiveKind::Cylinder => cylinder(tess.segments),
        PrimitiveKind::Cone => cone(tess.segments),
        PrimitiveKind::UvSphere => uv_sphere(tess.rings, tess.segments),
        PrimitiveKind::IcoSphere => ico_sphere(tess.ico_subdivisions),
        PrimitiveKind::Torus => torus(TORUS_MAJOR, TORUS_MINOR, tess.segments, tess.rings),
    })
}

fn cube() -> TriangleMesh {
    let mut m = TriangleMesh::default();
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            let mut n = [0.0; 3];
            n[axis] = sign;
            let n = Vec3::new(n[0], n[1], n[2]);
            // u x v = n
            let (u, v) = match axis {
                0 => (Vec3::Y, Vec3::Z),
                1 => (Vec3::Z, Vec3::X),
                _ => (Vec3::X, Vec3::Y),
            };
            let (u, v) = if sign > 0.0 { (u, v) } else { (v, u) };
            let c = n;
            let ids: Vec<u32> = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
                .iter()
                .map(|&(a, b)| m.vertex(c + u * a + v * b, n))
                .collect();
            m.tri(ids[0], ids[1], ids[2]);
            m.tri(ids[0], ids[2], ids[3]);
        }
    }
    m
}

fn ring(phi: f64) -> Vec3 {
    Vec3::new(phi.cos(), phi.sin(), 0.0)
}

fn cylinder(seg: usize) -> TriangleMesh {
    let mut m = TriangleMesh::default();
    let step = TAU / seg as f64;
    let side: Vec<(u32, u32)> = (0..seg)
        .map(|i| {
            let r = ring(i as f64 * step);
            (m.vertex(r - Vec3::Z, r), m.vertex(r + Vec3::Z, r))
        })
        .collect();
    for i in 0..seg {
        let (b0, t0) = side[i];
        let (b1, t1) = side[(i + 1) % seg];
        m.tri(b0, b1, t1);
        m.tri(b0, t1, t0);
    }
    for (z, n) in [(1.0, Vec3::Z), (-1.0, -Vec3::Z)] {
        let c = m.vertex(Vec3::new(0.0, 0.0, z), n);
        let rim: Vec<u32> = (0..seg).map(|i| m.vertex(ring(i as f64 * step) + Vec3::Z * z, n)).collect();
        for i in 0..seg {
            let (a, b) = (rim[i], rim[(i + 1) % seg]);
            if z > 0.0 {
                m.tri(c, a, b);
            } else {
                m.tri(c, b, a);
            }
        }
    }
    m
}

fn cone(seg: usize) -> TriangleMesh {
    let mut m = TriangleMesh::default();
    let step = TAU / seg as f64;
    // Slant normal for base radius 1 and height 2.
    let slant = |phi: f64| Vec3::new(2.0 * phi.cos(), 2.0 * phi.sin(), 1.0);
    let base: Vec<u32> = (0..seg)
        .map(|i| {
            let phi = i as f64 * step;
            m.vertex(ring(phi) - Vec3::Z, slant(phi))
        })
        .collect();
    for i in 0..seg {
        let apex = m.vertex(Vec3::Z, slant((i as f64 + 0.5) * step));
        m.tri(base[i], base[(i + 1) % seg], apex);
    }
    let c = m.vertex(-Vec3::Z, -Vec3::Z);
    let rim: Vec<u32> = (0..seg).map(|i| m.vertex(ring(i as f64 * step) - Vec3::Z, -Vec3::Z)).collect();
    for i in 0..seg {
        m.tri(c, rim[(i + 1) % seg], rim[i]);
    }
    m
}

fn uv_sphere(rings: usize, seg: usize) -> TriangleMesh {
    let mut m = TriangleMesh::default();
    let top = m.vertex(Vec3::Z, Vec3::Z);
    let mut lat = Vec::with_capacity(rings - 1);
    for r in 1..rings {
        let theta = PI * r as f64 / rings as f64;
        let row: Vec<u32> = (0..seg)
            .map(|i| {
                let phi = TAU * i as f64 / seg as f64;
                let p = Vec3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
                m.vertex(p, p)
            })
            .collect();
        lat.push(row);
    }
    let bottom = m.vertex(-Vec3::Z, -Vec3::Z);
    for i in 0..seg {
        let j = (i + 1) % seg;
        m.tri(top, lat[0][i], lat[0][j]);
        for r in 0..rings - 2 {
            let (a, b) = (&lat[r], &lat[r + 1]);
            m.tri(a[i], b[i], b[j]);
            m.tri(a[i], b[j], a[j]);
        }
        let last = &lat[rings - 2];
        m.tri(bottom, last[j], last[i]);
    }
    m
}

fn ico_sphere(subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalized())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut cache: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, verts: &mut Vec<Vec3>| {
            *cache.entry((a.min(b), a.max(b))).or_insert_with(|| {
                verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalized());
                (verts.len() - 1) as u32
            })
        };
        faces = faces
            .iter()
            .flat_map(|&[a, b, c]| {
                let ab = mid(a, b, &mut verts);
                let bc = mid(b, c, &mut verts);
                let ca = mid(c, a, &mut verts);
                [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
            })
            .collect();
    }
    TriangleMesh {
        normals: verts.clone(),
        vertices: verts,
        triangles: faces,
    }
}

fn torus(major: f64, minor: f64, seg: usize, tube: usize) -> TriangleMesh {
    let mut m = TriangleMesh::default();
    let mut grid = vec![vec![0u32; tube]; seg];
    for (i, row) in grid.iter_mut().enumerate() {
        let phi = TAU * i as f64 / seg as f64;
        let center = ring(phi) * major;
        for (j, id) in row.iter_mut().enumerate() {
            let theta = TAU * j as f64 / tube as f64;
            let n = ring(phi) * theta.cos() + Vec3::Z * theta.sin();
            *id = m.vertex(center + n * minor, n);
        }
    }
    for i in 0..seg {
        let i1 = (i + 1) % seg;
        for j in 0..tube {
            let j1 = (j + 1) % tube;
            let (a, b, c, d) = (grid[i][j], grid[i1][j], grid[i1][j1], grid[i][j1]);
            m.tri(a, b, c);
            m.tri(a, c, d);
        }
    }
    m
}
