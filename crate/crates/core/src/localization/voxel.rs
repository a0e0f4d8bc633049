use nalgebra::Point3;
use rayon::prelude::*;
use serde::Serialize;

use super::frustum::Frustum;
use crate::geometry::Aabb;

/// Regular voxel grid holding, per voxel, the number of frustums containing its center.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoxelGrid {
    pub origin: Point3<f64>,
    pub voxel_size: f64,
    pub dims: [usize; 3],
    pub votes: Vec<u32>,
}

/// Voxels whose vote reaches `threshold`, with the smallest normalized
/// fraction that produced that threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteLevel {
    pub threshold: u32,
    pub fraction: f64,
    /// Linear voxel indices, ascending.
    pub voxels: Vec<usize>,
}

impl VoxelGrid {
    pub fn empty(voxel_size: f64) -> Self {
        Self { origin: Point3::origin(), voxel_size, dims: [0; 3], votes: Vec::new() }
    }

    /// Zero-vote grid aligned to the world lattice of `voxel_size` covering `bounds`.
    pub fn covering(bounds: &Aabb, voxel_size: f64) -> Self {
        let lo = bounds.min.map(|v| (v / voxel_size).floor() as i64);
        let hi = bounds.max.map(|v| (v / voxel_size).ceil() as i64);
        let dims = [0, 1, 2].map(|i| (hi[i] - lo[i]).max(1) as usize);
        Self {
            origin: lo.map(|v| v as f64 * voxel_size),
            voxel_size,
            dims,
            votes: vec![0; dims[0] * dims[1] * dims[2]],
        }
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    #[inline]
    pub fn linear(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let yz = index / self.dims[0];
        [x, yz % self.dims[1], yz / self.dims[1]]
    }

    #[inline]
    pub fn center_of(&self, coords: [usize; 3]) -> Point3<f64> {
        Point3::new(
            self.origin.x + (coords[0] as f64 + 0.5) * self.voxel_size,
            self.origin.y + (coords[1] as f64 + 0.5) * self.voxel_size,
            self.origin.z + (coords[2] as f64 + 0.5) * self.voxel_size,
        )
    }

    pub fn center(&self, index: usize) -> Point3<f64> {
        self.center_of(self.coords(index))
    }

    pub fn max_vote(&self) -> u32 {
        self.votes.iter().copied().max().unwrap_or(0)
    }

    pub fn bounds(&self) -> Aabb {
        let size = nalgebra::Vector3::new(self.dims[0] as f64, self.dims[1] as f64, self.dims[2] as f64);
        Aabb { min: self.origin, max: self.origin + size * self.voxel_size }
    }

    /// Index range along `axis` whose voxel centers may fall in `[lo, hi]`, widened by one.
    fn index_range(&self, axis: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
        let to_index = |v: f64| (v - self.origin[axis]) / self.voxel_size - 0.5;
        let first = to_index(lo).ceil() as i64 - 1;
        let last = to_index(hi).floor() as i64 + 1;
        let n = self.dims[axis] as i64;
        let (first, last) = (first.max(0), last.min(n - 1));
        (first <= last).then_some((first as usize, last as usize))
    }

    fn vote_slice(&self, z: usize, slice: &mut [u32], frustums: &[(Frustum, Aabb)]) {
        let dx = self.dims[0];
        let zc = self.origin.z + (z as f64 + 0.5) * self.voxel_size;
        for (frustum, aabb) in frustums {
            if zc < aabb.min.z || zc > aabb.max.z {
                continue;
            }
            let Some((y0, y1)) = self.index_range(1, aabb.min.y, aabb.max.y) else { continue };
            for y in y0..=y1 {
                let yc = self.origin.y + (y as f64 + 0.5) * self.voxel_size;
                let Some((lo, hi)) = frustum.x_interval(yc, zc) else { continue };
                let Some((x0, x1)) = self.index_range(0, lo, hi) else { continue };
                let row = &mut slice[y * dx..(y + 1) * dx];
                for (x, vote) in row.iter_mut().enumerate().take(x1 + 1).skip(x0) {
                    // Only the two voxels at either end of the analytic interval
                    // can sit on the boundary; test those exactly.
                    let interior = x > x0 + 1 && x + 1 < x1;
                    if interior || frustum.contains(&self.center_of([x, y, z])) {
                        *vote += 1;
                    }
                }
            }
        }
    }
}

/// Counts, for every voxel center, the frustums that contain it.
///
/// The grid is aligned to the world lattice of `voxel_size` and covers the
/// union of the frustum bounding boxes.
pub fn vote(frustums: &[Frustum], voxel_size: f64) -> VoxelGrid {
    let Some(bounds) = frustums.iter().map(Frustum::aabb).reduce(|a, b| a.union(&b)) else {
        return VoxelGrid::empty(voxel_size);
    };
    let mut grid = VoxelGrid::covering(&bounds, voxel_size);
    let with_boxes: Vec<(Frustum, Aabb)> = frustums.iter().map(|f| (f.clone(), f.aabb())).collect();
    let slice_len = grid.dims[0] * grid.dims[1];
    let mut votes = std::mem::take(&mut grid.votes);
    votes
        .par_chunks_mut(slice_len)
        .enumerate()
        .for_each(|(z, slice)| grid.vote_slice(z, slice, &with_boxes));
    grid.votes = votes;
    grid
}

/// Vote threshold for a normalized fraction: `max(1, ceil(fraction * v_max))`.
pub fn vote_threshold(fraction: f64, max_vote: u32) -> u32 {
    // Guard against products like 0.3 * 10 = 3.0000000000000004.
    let t = (fraction * max_vote as f64 - 1e-9).ceil();
    (t.max(1.0)) as u32
}

/// Voxel sets at each distinct vote threshold implied by `fractions`,
/// ascending by threshold. Empty when no voxel has a vote.
pub fn extract_levels(grid: &VoxelGrid, fractions: &[f64]) -> Vec<VoteLevel> {
    let max_vote = grid.max_vote();
    if max_vote == 0 {
        return Vec::new();
    }
    let mut thresholds: Vec<(u32, f64)> = Vec::new();
    for &f in fractions {
        let t = vote_threshold(f, max_vote);
        match thresholds.iter_mut().find(|(existing, _)| *existing == t) {
            Some(slot) => slot.1 = slot.1.min(f),
            None => thresholds.push((t, f)),
        }
    }
    thresholds.sort_by_key(|(t, _)| *t);
    thresholds
        .into_iter()
        .map(|(threshold, fraction)| VoteLevel {
            threshold,
            fraction,
            voxels: grid
                .votes
                .iter()
                .enumerate()
                .filter(|(_, v)| **v >= threshold)
                .map(|(i, _)| i)
                .collect(),
        })
        .collect()
}
