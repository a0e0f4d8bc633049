use std::collections::BinaryHeap;

use nalgebra::Point3;
use ordered_float::OrderedFloat;

/// Static kd-tree for k-nearest-neighbor queries over mesh vertices.
///
/// Stored implicitly: `order` is permuted so that each subtree is a
/// contiguous range whose median element is the splitting point.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Point3<f64>>,
    order: Vec<usize>,
    axes: Vec<u8>,
}

impl KdTree {
    pub fn new(points: Vec<Point3<f64>>) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        build(&points, &mut order, &mut axes);
        Self { points, order, axes }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The `k` nearest points as `(index, distance)`, nearest first.
    /// Ties are broken by index.
    pub fn nearest(&self, query: &Point3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut heap: BinaryHeap<(OrderedFloat<f64>, usize)> = BinaryHeap::with_capacity(k + 1);
        if k > 0 {
            self.search(query, k, 0, self.order.len(), &mut heap);
        }
        let mut out: Vec<(usize, f64)> = heap.into_iter().map(|(d, i)| (i, d.0.sqrt())).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    fn search(&self, q: &Point3<f64>, k: usize, lo: usize, hi: usize, heap: &mut BinaryHeap<(OrderedFloat<f64>, usize)>) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid];
        let p = &self.points[idx];
        let d2 = OrderedFloat((p - q).norm_squared());
        if heap.len() < k {
            heap.push((d2, idx));
        } else if (d2, idx) < *heap.peek().unwrap() {
            heap.pop();
            heap.push((d2, idx));
        }
        let axis = self.axes[mid] as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 { ((lo, mid), (mid + 1, hi)) } else { ((mid + 1, hi), (lo, mid)) };
        self.search(q, k, near.0, near.1, heap);
        if heap.len() < k || diff * diff <= heap.peek().unwrap().0 .0 {
            self.search(q, k, far.0, far.1, heap);
        }
    }
}

fn build(points: &[Point3<f64>], order: &mut [usize], axes: &mut [u8]) {
    if order.len() <= 1 {
        return;
    }
    let mut lo = Point3::from([f64::INFINITY; 3]);
    let mut hi = Point3::from([f64::NEG_INFINITY; 3]);
    for &i in order.iter() {
        lo = lo.inf(&points[i]);
        hi = hi.sup(&points[i]);
    }
    let e = hi - lo;
    let axis = if e.x >= e.y && e.x >= e.z { 0 } else if e.y >= e.z { 1 } else { 2 };
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |a, b| points[*a][axis].total_cmp(&points[*b][axis]));
    axes[mid] = axis as u8;
    let (left, rest) = order.split_at_mut(mid);
    let (left_axes, rest_axes) = axes.split_at_mut(mid);
    build(points, left, left_axes);
    build(points, &mut rest[1..], &mut rest_axes[1..]);
}
