//! Coarse 3D localization of a tag from the viewpoints that recognized it.
//!
//! Each viewpoint becomes a frustum; the frustums vote on a voxel grid;
//! voxels are thresholded at several levels relative to the maximum vote,
//! clustered with DBSCAN, and turned into boxes. A final non-maximum
//! suppression removes boxes that enclose a more confident box.

mod dbscan;
mod frustum;
mod nms;
mod voxel;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Aabb;
use crate::params::LocalizationParams;
use crate::store::{TagMap, Viewpoint, ViewpointId};

pub use dbscan::dbscan;
pub use frustum::{make_frustum, Frustum, Plane};
pub use nms::{nms, CONTAINMENT_EPS};
pub use voxel::{extract_levels, vote, vote_threshold, VoteLevel, VoxelGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizationError {
    #[error("viewpoint {id}: far plane {far} must exceed near plane {near}")]
    DegenerateFrustum { id: ViewpointId, near: f64, far: f64 },
}

/// A box hypothesizing where a tag's entity lies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal {
    pub aabb: Aabb,
    /// Minimum vote over the cluster's voxels: every voxel is seen by at
    /// least this many viewpoints.
    pub confidence_level: u32,
    /// Normalized vote threshold that produced the cluster.
    pub level_fraction: f64,
    pub voxel_count: usize,
}

/// Flat output record used by the CLI and the HTTP API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub tag: String,
    pub aabb_min: [f64; 3],
    pub aabb_max: [f64; 3],
    pub confidence_level: u32,
    pub level_fraction: f64,
    pub voxel_count: usize,
}

impl ProposalRecord {
    pub fn new(tag: &str, p: &Proposal) -> Self {
        Self {
            tag: tag.to_string(),
            aabb_min: p.aabb.min.into(),
            aabb_max: p.aabb.max.into(),
            confidence_level: p.confidence_level,
            level_fraction: p.level_fraction,
            voxel_count: p.voxel_count,
        }
    }
}

/// One voxel of the debug dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VotedVoxel {
    pub center: [f64; 3],
    pub votes: u32,
}

/// Frustums of the viewpoints; degenerate ones are skipped with a warning.
pub fn frustums_for<'a>(viewpoints: impl IntoIterator<Item = &'a Viewpoint>, near: f64) -> Vec<Frustum> {
    viewpoints
        .into_iter()
        .filter_map(|vp| match make_frustum(vp, near) {
            Ok(f) => Some(f),
            Err(e) => {
                tracing::warn!(error = %e, "skipping viewpoint");
                None
            }
        })
        .collect()
}

fn selected_viewpoints<'a>(map: &'a TagMap, tag: &str, params: &LocalizationParams) -> Vec<&'a Viewpoint> {
    let mut views: Vec<&Viewpoint> = map.viewpoints_for(tag).into_iter().map(|(v, _)| v).collect();
    if let Some(cap) = params.max_views {
        views.truncate(cap);
    }
    views
}

/// Voxel votes for a tag, as a point list (only voxels with at least one vote).
pub fn vote_dump(map: &TagMap, tag: &str, params: &LocalizationParams) -> Vec<VotedVoxel> {
    let frustums = frustums_for(selected_viewpoints(map, tag, params), params.near_plane);
    let grid = vote(&frustums, params.voxel_size);
    grid.votes
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0)
        .map(|(i, v)| VotedVoxel { center: grid.center(i).into(), votes: *v })
        .collect()
}

/// Proposals for a tag; empty when the tag is unknown.
///
/// Sorted by descending confidence level, then descending voxel count.
pub fn localize_tag(map: &TagMap, tag: &str, params: &LocalizationParams) -> Vec<Proposal> {
    let views = selected_viewpoints(map, tag, params);
    if views.is_empty() {
        return Vec::new();
    }
    localize_viewpoints(views, params)
}

/// Localization over an explicit set of viewpoints.
pub fn localize_viewpoints<'a>(
    viewpoints: impl IntoIterator<Item = &'a Viewpoint>,
    params: &LocalizationParams,
) -> Vec<Proposal> {
    let frustums = frustums_for(viewpoints, params.near_plane);
    let grid = vote(&frustums, params.voxel_size);
    let mut proposals = Vec::new();
    // Cluster in voxel units: coordinates are exact integers, so lattice
    // neighbors at exactly eps are not lost to rounding.
    let eps = params.dbscan_eps / params.voxel_size * (1.0 + 1e-9);
    for level in extract_levels(&grid, &params.normalized_vote_thresholds) {
        let coords: Vec<[usize; 3]> = level.voxels.iter().map(|&i| grid.coords(i)).collect();
        let points: Vec<Point3<f64>> =
            coords.iter().map(|c| Point3::new(c[0] as f64, c[1] as f64, c[2] as f64)).collect();
        for cluster in dbscan(&points, eps, params.dbscan_min_points) {
            proposals.push(cluster_proposal(&grid, &level, &coords, &cluster));
        }
    }
    let mut out = nms(&proposals);
    out.sort_by(|a, b| {
        b.confidence_level
            .cmp(&a.confidence_level)
            .then(b.voxel_count.cmp(&a.voxel_count))
            .then(a.aabb.min.x.total_cmp(&b.aabb.min.x))
            .then(a.aabb.min.y.total_cmp(&b.aabb.min.y))
            .then(a.aabb.min.z.total_cmp(&b.aabb.min.z))
    });
    out
}

fn cluster_proposal(grid: &VoxelGrid, level: &VoteLevel, coords: &[[usize; 3]], cluster: &[usize]) -> Proposal {
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    let mut min_vote = u32::MAX;
    for &member in cluster {
        let c = coords[member];
        for axis in 0..3 {
            lo[axis] = lo[axis].min(c[axis]);
            hi[axis] = hi[axis].max(c[axis]);
        }
        min_vote = min_vote.min(grid.votes[level.voxels[member]]);
    }
    let vs = grid.voxel_size;
    let min = grid.origin + Vector3::new(lo[0] as f64, lo[1] as f64, lo[2] as f64) * vs;
    let max = grid.origin + Vector3::new((hi[0] + 1) as f64, (hi[1] + 1) as f64, (hi[2] + 1) as f64) * vs;
    Proposal {
        aabb: Aabb { min, max },
        confidence_level: min_vote,
        level_fraction: level.fraction,
        voxel_count: cluster.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Intrinsics, Pose};

    fn view(id: u64, eye: [f64; 3], target: [f64; 3], far: f64) -> Viewpoint {
        Viewpoint {
            id,
            pose: Pose::look_at(Point3::from(eye), Point3::from(target), Vector3::z()).unwrap(),
            intrinsics: Intrinsics { fx: 100.0, fy: 100.0, cx: 80.0, cy: 60.0, width: 160, height: 120 },
            far_plane_dist: far,
        }
    }

    #[test]
    fn unknown_tag_is_empty() {
        assert!(localize_tag(&TagMap::default(), "unicorn", &LocalizationParams::default()).is_empty());
    }

    #[test]
    fn single_view_gives_one_level_one_proposal() {
        let mut map = TagMap::default();
        let vp = view(1, [0.0, 0.0, 1.0], [3.0, 0.0, 1.0], 3.0);
        map.insert(vp.clone(), [("lamp", 1.0)]).unwrap();
        let out = localize_tag(&map, "lamp", &LocalizationParams::default());
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].confidence_level, 1);
        let frustum_box = make_frustum(&vp, 0.2).unwrap().aabb().inflated(0.2);
        assert!(frustum_box.contains_box(&out[0].aabb, 1e-9));
    }

    #[test]
    fn two_overlapping_views_keep_the_overlap() {
        let mut map = TagMap::default();
        map.insert(view(1, [0.0, -1.5, 1.0], [2.0, 0.0, 1.0], 4.0), [("table", 1.0)]).unwrap();
        map.insert(view(2, [0.0, 1.5, 1.0], [2.0, 0.0, 1.0], 4.0), [("table", 1.0)]).unwrap();
        let out = localize_tag(&map, "table", &LocalizationParams::default());
        assert_eq!(out[0].confidence_level, 2);
        assert!(out[0].aabb.contains_point(&Point3::new(2.0, 0.0, 1.0), 0.0));
        // Any surviving level-1 proposal must not enclose the level-2 one.
        for p in out.iter().filter(|p| p.confidence_level == 1) {
            assert!(!p.aabb.contains_box(&out[0].aabb, CONTAINMENT_EPS));
        }
    }

    #[test]
    fn max_views_caps_by_confidence() {
        let mut map = TagMap::default();
        map.insert(view(1, [0.0, -1.5, 1.0], [2.0, 0.0, 1.0], 4.0), [("table", 0.9)]).unwrap();
        map.insert(view(2, [0.0, 1.5, 1.0], [2.0, 0.0, 1.0], 4.0), [("table", 0.5)]).unwrap();
        let params = LocalizationParams { max_views: Some(1), ..Default::default() };
        let out = localize_tag(&map, "table", &params);
        assert!(out.iter().all(|p| p.confidence_level == 1));
    }
}
