//! Binned-SAH bounding volume hierarchy over triangles.

use super::geometry::Triangle;
use crate::error::{Error, Result};
use crate::math::{Ray, Vec3};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub triangle: u32,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub const EMPTY: Aabb = Aabb {
        min: Vec3::splat(f64::INFINITY),
        max: Vec3::splat(f64::NEG_INFINITY),
    };

    pub fn grow(&mut self, p: Vec3) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn merge(&mut self, o: &Aabb) {
        self.min = self.min.min(o.min);
        self.max = self.max.max(o.max);
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= o.min[i] && self.max[i] >= o.max[i])
    }

    fn half_area(&self) -> f64 {
        let d = self.max - self.min;
        if d.x < 0.0 {
            return 0.0;
        }
        d.x * d.y + d.y * d.z + d.z * d.x
    }

    /// Slab test; entry distance if the box overlaps `[t_min, t_max]`.
    #[inline]
    fn hit(&self, origin: Vec3, inv_dir: Vec3, t_min: f64, t_max: f64) -> Option<f64> {
        let mut t0 = t_min;
        let mut t1 = t_max;
        for i in 0..3 {
            let a = (self.min[i] - origin[i]) * inv_dir[i];
            let b = (self.max[i] - origin[i]) * inv_dir[i];
            // NaN from 0 * inf must not shrink the interval.
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if lo > t0 {
                t0 = lo;
            }
            if hi < t1 {
                t1 = hi;
            }
        }
        (t0 <= t1).then_some(t0)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BvhNode {
    pub bounds: Aabb,
    /// Leaf: first index into `indices`. Interior: index of the right child (left is `self + 1`).
    pub offset: u32,
    /// Number of triangles in a leaf; zero for interior nodes.
    pub count: u32,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    pub nodes: Vec<BvhNode>,
    /// Triangle ids in leaf order; every triangle appears exactly once.
    pub indices: Vec<u32>,
}

const BINS: usize = 12;
const MAX_LEAF: usize = 4;

fn tri_bounds(t: &Triangle) -> Aabb {
    let mut b = Aabb::EMPTY;
    for p in t.vertices() {
        b.grow(p);
    }
    b
}

pub fn build_bvh(tris: &[Triangle]) -> Result<Bvh> {
    if tris.is_empty() {
        return Err(Error::invalid("build_bvh", "scene has no triangles"));
    }
    let bounds: Vec<Aabb> = tris.iter().map(tri_bounds).collect();
    let centroids: Vec<Vec3> = bounds.iter().map(|b| (b.min + b.max) * 0.5).collect();
    let mut bvh = Bvh {
        nodes: Vec::with_capacity(2 * tris.len() / MAX_LEAF + 1),
        indices: (0..tris.len() as u32).collect(),
    };
    bvh.build_node(&bounds, &centroids, 0, tris.len());
    Ok(bvh)
}

impl Bvh {
    fn build_node(&mut self, bounds: &[Aabb], centroids: &[Vec3], start: usize, end: usize) -> usize {
        let mut b = Aabb::EMPTY;
        let mut cb = Aabb::EMPTY;
        for &i in &self.indices[start..end] {
            b.merge(&bounds[i as usize]);
            cb.grow(centroids[i as usize]);
        }
        let id = self.nodes.len();
        self.nodes.push(BvhNode {
            bounds: b,
            offset: start as u32,
            count: (end - start) as u32,
        });
        let n = end - start;
        if n <= MAX_LEAF {
            return id;
        }
        let extent = cb.max - cb.min;
        let axis = if extent.x >= extent.y && extent.x >= extent.z {
            0
        } else if extent.y >= extent.z {
            1
        } else {
            2
        };
        if extent[axis] <= 0.0 {
            return id;
        }

        let bin_of = |c: Vec3| (((c[axis] - cb.min[axis]) / extent[axis] * BINS as f64) as usize).min(BINS - 1);
        let mut bin_bounds = [Aabb::EMPTY; BINS];
        let mut bin_counts = [0usize; BINS];
        for &i in &self.indices[start..end] {
            let k = bin_of(centroids[i as usize]);
            bin_bounds[k].merge(&bounds[i as usize]);
            bin_counts[k] += 1;
        }
        let mut best = (f64::INFINITY, 0);
        for split in 1..BINS {
            let (mut lb, mut rb) = (Aabb::EMPTY, Aabb::EMPTY);
            let (mut lc, mut rc) = (0, 0);
            for k in 0..split {
                lb.merge(&bin_bounds[k]);
                lc += bin_counts[k];
            }
            for k in split..BINS {
                rb.merge(&bin_bounds[k]);
                rc += bin_counts[k];
            }
            if lc == 0 || rc == 0 {
                continue;
            }
            let cost = lb.half_area() * lc as f64 + rb.half_area() * rc as f64;
            if cost < best.0 {
                best = (cost, split);
            }
        }
        let leaf_cost = b.half_area() * n as f64;
        if best.0 >= leaf_cost && n <= 2 * MAX_LEAF {
            return id;
        }
        let mid = if best.0.is_finite() {
            let slice = &mut self.indices[start..end];
            let mut i = 0;
            for j in 0..slice.len() {
                if bin_of(centroids[slice[j] as usize]) < best.1 {
                    slice.swap(i, j);
                    i += 1;
                }
            }
            start + i
        } else {
            // all centroids in one bin: median split on the axis
            self.indices[start..end].sort_by(|&a, &b| centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis]));
            start + n / 2
        };
        self.nodes[id].count = 0;
        self.build_node(bounds, centroids, start, mid);
        let right = self.build_node(bounds, centroids, mid, end);
        self.nodes[id].offset = right as u32;
        id
    }

    fn inv_dir(ray: &Ray) -> Vec3 {
        Vec3::new(1.0 / ray.dir.x, 1.0 / ray.dir.y, 1.0 / ray.dir.z)
    }

    /// Nearest hit in `(t_min, t_max)`; ties resolve to the lowest triangle id.
    pub fn intersect(&self, tris: &[Triangle], ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
        let inv = Self::inv_dir(ray);
        let mut best: Option<Hit> = None;
        let mut closest = t_max;
        let mut stack = [0u32; 64];
        let mut sp = 0;
        self.nodes[0].bounds.hit(ray.origin, inv, t_min, closest)?;
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.bounds.hit(ray.origin, inv, t_min, closest).is_none() {
                continue;
            }
            if node.count > 0 {
                let start = node.offset as usize;
                for &ti in &self.indices[start..start + node.count as usize] {
                    // `closest` is inclusive so equal-t hits can be compared by id.
                    if let Some((t, u, v)) = tris[ti as usize].intersect(ray, t_min, f64::min(closest * (1.0 + 1e-15), t_max)) {
                        let better = match best {
                            None => true,
                            Some(b) => t < b.t || (t == b.t && ti < b.triangle),
                        };
                        if better && t <= closest {
                            best = Some(Hit { t, triangle: ti, u, v });
                            closest = t;
                        }
                    }
                }
            } else {
                let idx = stack[sp];
                let (left, right) = (idx + 1, node.offset);
                let tl = self.nodes[left as usize].bounds.hit(ray.origin, inv, t_min, closest);
                let tr = self.nodes[right as usize].bounds.hit(ray.origin, inv, t_min, closest);
                match (tl, tr) {
                    (Some(a), Some(b)) => {
                        let (near, far) = if a <= b { (left, right) } else { (right, left) };
                        stack[sp] = far;
                        stack[sp + 1] = near;
                        sp += 2;
                    }
                    (Some(_), None) => {
                        stack[sp] = left;
                        sp += 1;
                    }
                    (None, Some(_)) => {
                        stack[sp] = right;
                        sp += 1;
                    }
                    (None, None) => {}
                }
            }
        }
        best
    }

    /// Any hit in `(t_min, t_max)`.
    pub fn occluded(&self, tris: &[Triangle], ray: &Ray, t_min: f64, t_max: f64) -> bool {
        let inv = Self::inv_dir(ray);
        let mut stack = [0u32; 64];
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let idx = stack[sp];
            let node = &self.nodes[idx as usize];
            if node.bounds.hit(ray.origin, inv, t_min, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                let start = node.offset as usize;
                if self.indices[start..start + node.count as usize]
                    .iter()
                    .any(|&ti| tris[ti as usize].intersect(ray, t_min, t_max).is_some())
                {
                    return true;
                }
            } else {
                stack[sp] = node.offset;
                stack[sp + 1] = idx + 1;
                sp += 2;
            }
        }
        false
    }
}

/// Nearest hit by testing every triangle; the reference for [`Bvh::intersect`].
pub fn brute_force_intersect(tris: &[Triangle], ray: &Ray, t_min: f64, t_max: f64) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    for (i, tri) in tris.iter().enumerate() {
        if let Some((t, u, v)) = tri.intersect(ray, t_min, t_max) {
            if best.is_none_or(|b| t < b.t) {
                best = Some(Hit {
                    t,
                    triangle: i as u32,
                    u,
                    v,
                });
            }
        }
    }
    best
}
