//! Ray and segment queries against a triangle soup, accelerated by a BVH.

use nalgebra::{Point3, Vector3};

use crate::geometry::Aabb;

/// Parallel-ray rejection threshold for the determinant in Möller–Trumbore.
const DET_EPS: f64 = 1e-12;
/// Segment endpoints within this distance of a hit are not counted as blocked,
/// so a segment ending exactly on a surface stays collision-free.
pub const ENDPOINT_EPS: f64 = 1e-6;
const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone)]
enum Node {
    Leaf { bounds: Aabb, start: usize, count: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Bounding-volume hierarchy over triangles (median split on the widest axis).
#[derive(Debug, Clone)]
pub struct TriangleBvh {
    triangles: Vec<[Point3<f64>; 3]>,
    nodes: Vec<Node>,
}

impl TriangleBvh {
    pub fn new(triangles: Vec<[Point3<f64>; 3]>) -> Self {
        let mut bvh = Self { triangles, nodes: Vec::new() };
        if !bvh.triangles.is_empty() {
            let n = bvh.triangles.len();
            bvh.build(0, n);
        }
        bvh
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    fn range_bounds(&self, start: usize, end: usize) -> Aabb {
        Aabb::from_points(self.triangles[start..end].iter().flatten()).expect("non-empty range")
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let bounds = self.range_bounds(start, end);
        let index = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bounds, start, count: end - start });
            return index;
        }
        let centroid = |t: &[Point3<f64>; 3]| (t[0].coords + t[1].coords + t[2].coords) / 3.0;
        let centroids =
            Aabb::from_points(self.triangles[start..end].iter().map(|t| Point3::from(centroid(t))).collect::<Vec<_>>().iter())
                .expect("non-empty range");
        let e = centroids.extent();
        let axis = if e.x >= e.y && e.x >= e.z { 0 } else if e.y >= e.z { 1 } else { 2 };
        let mid = (start + end) / 2;
        self.triangles[start..end]
            .select_nth_unstable_by(mid - start, |a, b| centroid(a)[axis].total_cmp(&centroid(b)[axis]));
        self.nodes.push(Node::Leaf { bounds, start, count: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[index] = Node::Inner { bounds, left, right };
        index
    }

    /// Visits every triangle whose subtree box the ray segment `[0, t_max]` touches.
    fn traverse(&self, origin: &Point3<f64>, dir: &Vector3<f64>, t_max: f64, mut visit: impl FnMut(&[Point3<f64>; 3]) -> bool) {
        if self.nodes.is_empty() {
            return;
        }
        let inv = dir.map(|d| 1.0 / d);
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            if !slab_hit(node.bounds(), origin, &inv, t_max) {
                continue;
            }
            match node {
                Node::Leaf { start, count, .. } => {
                    for t in &self.triangles[*start..start + count] {
                        if visit(t) {
                            return;
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    stack.push(*left);
                    stack.push(*right);
                }
            }
        }
    }

    /// Distance along `dir` to the nearest triangle hit in `(0, t_max]`.
    /// Both triangle faces count.
    pub fn first_hit(&self, origin: &Point3<f64>, dir: &Vector3<f64>, t_max: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        self.traverse(origin, dir, t_max, |tri| {
            if let Some(t) = intersect_triangle(origin, dir, tri) {
                if t > 0.0 && t <= t_max && best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
            false
        });
        best
    }

    /// Number of triangle crossings along the ray `(0, ∞)`.
    pub fn count_hits(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> usize {
        let mut n = 0;
        self.traverse(origin, dir, f64::INFINITY, |tri| {
            if intersect_triangle(origin, dir, tri).is_some_and(|t| t > 0.0) {
                n += 1;
            }
            false
        });
        n
    }

    /// Whether the open segment from `a` to `b` crosses any triangle. Hits
    /// within [`ENDPOINT_EPS`] of either endpoint are ignored.
    pub fn segment_blocked(&self, a: &Point3<f64>, b: &Point3<f64>) -> bool {
        let d = b - a;
        let len = d.norm();
        if len <= 2.0 * ENDPOINT_EPS {
            return false;
        }
        let dir = d / len;
        let mut blocked = false;
        self.traverse(a, &dir, len, |tri| {
            blocked = intersect_triangle(a, &dir, tri).is_some_and(|t| t > ENDPOINT_EPS && t < len - ENDPOINT_EPS);
            blocked
        });
        blocked
    }
}

fn slab_hit(b: &Aabb, origin: &Point3<f64>, inv: &Vector3<f64>, t_max: f64) -> bool {
    let mut t0 = 0.0f64;
    let mut t1 = t_max;
    for axis in 0..3 {
        let lo = (b.min[axis] - origin[axis]) * inv[axis];
        let hi = (b.max[axis] - origin[axis]) * inv[axis];
        // NaN arises when the ray lies exactly in a slab plane; keep it conservative.
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        if lo.is_nan() || hi.is_nan() {
            continue;
        }
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 > t1 * (1.0 + 1e-12) + 1e-12 {
            return false;
        }
    }
    true
}

/// Ray parameter at which the ray `origin + t * dir` (t >= 0) enters `b`;
/// 0 when the origin is inside, `None` when the ray misses.
pub fn ray_box_entry(origin: &Point3<f64>, dir: &Vector3<f64>, b: &Aabb) -> Option<f64> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for axis in 0..3 {
        if dir[axis].abs() < 1e-15 {
            if origin[axis] < b.min[axis] || origin[axis] > b.max[axis] {
                return None;
            }
            continue;
        }
        let inv = 1.0 / dir[axis];
        let (lo, hi) = {
            let a = (b.min[axis] - origin[axis]) * inv;
            let c = (b.max[axis] - origin[axis]) * inv;
            if a <= c { (a, c) } else { (c, a) }
        };
        t0 = t0.max(lo);
        t1 = t1.min(hi);
    }
    (t0 <= t1).then_some(t0)
}

/// Möller–Trumbore intersection; returns the ray parameter of the hit.
pub fn intersect_triangle(origin: &Point3<f64>, dir: &Vector3<f64>, tri: &[Point3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < DET_EPS {
        return None;
    }
    let inv_det = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv_det;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv_det;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&q) * inv_det)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_soup(n: usize, seed: u64) -> Vec<[Point3<f64>; 3]> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let c = Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
                [0, 1, 2].map(|_| c + Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            })
            .collect()
    }

    #[test]
    fn bvh_matches_brute_force() {
        let soup = random_soup(300, 3);
        let bvh = TriangleBvh::new(soup.clone());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let o = Point3::new(rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0), rng.random_range(-6.0..6.0));
            let d = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)).normalize();
            let brute = soup
                .iter()
                .filter_map(|t| intersect_triangle(&o, &d, t))
                .filter(|t| *t > 0.0 && *t <= 8.0)
                .min_by(f64::total_cmp);
            assert_eq!(bvh.first_hit(&o, &d, 8.0), brute);
            let count = soup.iter().filter_map(|t| intersect_triangle(&o, &d, t)).filter(|t| *t > 0.0).count();
            assert_eq!(bvh.count_hits(&o, &d), count);
        }
    }

    #[test]
    fn segment_ending_on_surface_is_free() {
        let tri = [Point3::new(-1.0, -1.0, 1.0), Point3::new(3.0, -1.0, 1.0), Point3::new(-1.0, 3.0, 1.0)];
        let bvh = TriangleBvh::new(vec![tri]);
        let a = Point3::new(0.0, 0.0, 0.0);
        assert!(!bvh.segment_blocked(&a, &Point3::new(0.0, 0.0, 1.0)));
        assert!(bvh.segment_blocked(&a, &Point3::new(0.0, 0.0, 2.0)));
        assert!(!bvh.segment_blocked(&a, &Point3::new(0.0, 0.0, 0.5)));
    }

    #[test]
    fn box_entry() {
        let b = Aabb::from_arrays([1.0, -1.0, -1.0], [2.0, 1.0, 1.0]).unwrap();
        assert_eq!(ray_box_entry(&Point3::origin(), &Vector3::x(), &b), Some(1.0));
        assert_eq!(ray_box_entry(&Point3::origin(), &-Vector3::x(), &b), None);
        assert_eq!(ray_box_entry(&Point3::new(1.5, 0.0, 0.0), &Vector3::y(), &b), Some(0.0));
    }

    #[test]
    fn axis_aligned_rays_hit_boxes() {
        // Rays parallel to the coordinate planes exercise the infinite inverse direction.
        let tri = [Point3::new(0.0, 0.0, 0.0), Point3::new(0.0, 2.0, 0.0), Point3::new(0.0, 0.0, 2.0)];
        let bvh = TriangleBvh::new(vec![tri]);
        let hit = bvh.first_hit(&Point3::new(-1.0, 0.5, 0.5), &Vector3::x(), 10.0);
        assert_eq!(hit, Some(1.0));
    }
}
