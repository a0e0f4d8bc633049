//! Assigning grid-graph nodes to proposal boxes and labeled entities.

use super::graph::{GridGraph, Scene};
use crate::geometry::Aabb;

/// Nodes in the `delta`-inflated box but outside the original, kept only
/// when the segment to their nearest point on the original box is clear.
fn visible_ring(graph: &GridGraph, scene: &Scene, b: &Aabb, delta: f64, exclude_inside: bool) -> Vec<u32> {
    graph
        .nodes_in_box(&b.inflated(delta))
        .into_iter()
        .filter(|&n| {
            let p = graph.nodes()[n as usize];
            if exclude_inside && b.contains_point(&p, 1e-9) {
                return false;
            }
            scene.collision_free(&p, &b.closest_point(&p))
        })
        .collect()
}

/// Nodes for a proposal: those inside the box; if there are none, nodes
/// within `delta` of it that can see the box.
pub fn assign_nodes_proposal(graph: &GridGraph, scene: &Scene, proposal: &Aabb, delta: f64) -> Vec<u32> {
    let inside = graph.nodes_in_box(proposal);
    if !inside.is_empty() {
        return inside;
    }
    visible_ring(graph, scene, proposal, delta, false)
}

/// Nodes for a labeled object: those inside the box plus nodes within
/// `delta` of it that can see the box.
pub fn assign_nodes_object(graph: &GridGraph, scene: &Scene, object: &Aabb, delta: f64) -> Vec<u32> {
    let mut nodes = graph.nodes_in_box(object);
    nodes.extend(visible_ring(graph, scene, object, delta, true));
    nodes.sort_unstable();
    nodes
}

/// Nodes for a labeled region: exactly those inside its box.
pub fn assign_nodes_region(graph: &GridGraph, region: &Aabb) -> Vec<u32> {
    graph.nodes_in_box(region)
}
