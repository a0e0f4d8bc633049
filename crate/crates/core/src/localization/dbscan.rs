//! Density-based clustering with a pinned iteration order.

use std::collections::HashMap;

use nalgebra::Point3;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Label {
    Unvisited,
    Noise,
    Cluster(usize),
}

/// Uniform hash grid with cell size `eps` for fixed-radius neighbor queries.
struct NeighborGrid<'a> {
    points: &'a [Point3<f64>],
    cells: HashMap<[i64; 3], Vec<usize>>,
    eps: f64,
}

impl<'a> NeighborGrid<'a> {
    fn new(points: &'a [Point3<f64>], eps: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::cell(p, eps)).or_default().push(i);
        }
        Self { points, cells, eps }
    }

    fn cell(p: &Point3<f64>, eps: f64) -> [i64; 3] {
        [(p.x / eps).floor() as i64, (p.y / eps).floor() as i64, (p.z / eps).floor() as i64]
    }

    /// Indices within `eps` of point `i` (itself included), ascending.
    fn neighbors(&self, i: usize, out: &mut Vec<usize>) {
        out.clear();
        let p = &self.points[i];
        let c = Self::cell(p, self.eps);
        let eps2 = self.eps * self.eps;
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(bucket) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        out.extend(bucket.iter().copied().filter(|&j| (self.points[j] - p).norm_squared() <= eps2));
                    }
                }
            }
        }
        out.sort_unstable();
    }
}

/// DBSCAN over 3D points; returns clusters of point indices with noise dropped.
///
/// Neighborhoods include the point itself and use `distance <= eps`. Seeds
/// are visited in ascending index order and a border point joins the first
/// cluster that reaches it, so the partition is deterministic. Clusters are
/// ordered by creation and their members are ascending.
pub fn dbscan(points: &[Point3<f64>], eps: f64, min_points: usize) -> Vec<Vec<usize>> {
    assert!(eps > 0.0 && min_points >= 1, "dbscan needs eps > 0 and min_points >= 1");
    let grid = NeighborGrid::new(points, eps);
    let mut labels = vec![Label::Unvisited; points.len()];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut neighborhood = Vec::new();
    let mut seeds = Vec::new();

    for i in 0..points.len() {
        if labels[i] != Label::Unvisited {
            continue;
        }
        grid.neighbors(i, &mut neighborhood);
        if neighborhood.len() < min_points {
            labels[i] = Label::Noise;
            continue;
        }
        let id = clusters.len();
        let mut members = vec![i];
        labels[i] = Label::Cluster(id);
        seeds.clear();
        seeds.extend(neighborhood.iter().copied().filter(|&j| j != i));
        let mut cursor = 0;
        while cursor < seeds.len() {
            let q = seeds[cursor];
            cursor += 1;
            match labels[q] {
                Label::Noise => {
                    labels[q] = Label::Cluster(id);
                    members.push(q);
                }
                Label::Unvisited => {
                    labels[q] = Label::Cluster(id);
                    members.push(q);
                    grid.neighbors(q, &mut neighborhood);
                    if neighborhood.len() >= min_points {
                        seeds.extend(neighborhood.iter().copied().filter(|&j| labels[j] != Label::Cluster(id)));
                    }
                }
                Label::Cluster(_) => {}
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    clusters
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tight_group_is_one_cluster() {
        let points: Vec<_> = (0..10).map(|i| Point3::new(i as f64 * 0.01, 0.0, 0.0)).collect();
        let clusters = dbscan(&points, 0.4, 5);
        assert_eq!(clusters, vec![(0..10).collect::<Vec<_>>()]);
    }

    #[test]
    fn separated_blobs() {
        let mut points = Vec::new();
        for offset in [0.0, 4.0] {
            for i in 0..6 {
                points.push(Point3::new(offset + (i % 2) as f64 * 0.05, (i / 2) as f64 * 0.05, 0.0));
            }
        }
        let clusters = dbscan(&points, 0.4, 5);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0], (0..6).collect::<Vec<_>>());
        assert_eq!(clusters[1], (6..12).collect::<Vec<_>>());
    }

    #[test]
    fn sparse_points_are_noise() {
        let points: Vec<_> = (0..4).map(|i| Point3::new(i as f64 * 10.0, 0.0, 0.0)).collect();
        assert!(dbscan(&points, 0.4, 2).is_empty());
        assert_eq!(dbscan(&points, 0.4, 1).len(), 4);
    }

    #[test]
    fn border_point_joins_first_cluster() {
        // Index 0 sits between two groups and is within eps of one core point
        // on each side, but has too few neighbors to be core itself.
        let xs = [0.0, -0.4, -0.5, -0.6, -0.7, 0.4, 0.5, 0.6, 0.7];
        let points: Vec<_> = xs.iter().map(|x| Point3::new(*x, 0.0, 0.0)).collect();
        let clusters = dbscan(&points, 0.45, 4);
        assert_eq!(clusters, vec![vec![0, 1, 2, 3, 4], vec![5, 6, 7, 8]]);
    }
}
