use std::cmp::Ordering;

use super::Proposal;

/// Containment tolerance in meters.
pub const CONTAINMENT_EPS: f64 = 1e-6;

fn same_box(a: &Proposal, b: &Proposal) -> bool {
    (0..3).all(|i| {
        (a.aabb.min[i] - b.aabb.min[i]).abs() <= CONTAINMENT_EPS
            && (a.aabb.max[i] - b.aabb.max[i]).abs() <= CONTAINMENT_EPS
    })
}

fn processing_order(a: &Proposal, b: &Proposal) -> Ordering {
    b.confidence_level
        .cmp(&a.confidence_level)
        .then(a.aabb.volume().total_cmp(&b.aabb.volume()))
        .then_with(|| {
            let ka = [a.aabb.min.x, a.aabb.min.y, a.aabb.min.z, a.aabb.max.x, a.aabb.max.y, a.aabb.max.z];
            let kb = [b.aabb.min.x, b.aabb.min.y, b.aabb.min.z, b.aabb.max.x, b.aabb.max.y, b.aabb.max.z];
            ka.iter().zip(kb.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
        })
        .then(b.voxel_count.cmp(&a.voxel_count))
}

/// Drops every proposal that contains a surviving proposal of a strictly
/// higher confidence level, and duplicates with the same box and level.
///
/// Proposals are visited by descending level, smaller volume first; the
/// survivors are returned in that order.
pub fn nms(proposals: &[Proposal]) -> Vec<Proposal> {
    let mut ordered: Vec<&Proposal> = proposals.iter().collect();
    ordered.sort_by(|a, b| processing_order(a, b));
    let mut kept: Vec<Proposal> = Vec::with_capacity(ordered.len());
    for p in ordered {
        let suppressed = kept.iter().any(|q| {
            (q.confidence_level > p.confidence_level && p.aabb.contains_box(&q.aabb, CONTAINMENT_EPS))
                || (q.confidence_level == p.confidence_level && same_box(p, q))
        });
        if !suppressed {
            kept.push(p.clone());
        }
    }
    kept
}
