//! Path-length distances between proposals and labeled entities.
//!
//! P2E averages, over a proposal's nodes, the shortest-path length to the
//! nearest node of any instance of the class; E2P is the same with the
//! roles swapped. Node lists are treated as sets.

use thiserror::Error;

use super::graph::GridGraph;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("the source node set is empty")]
    EmptySource,
    #[error("every target node set is empty")]
    NoTargets,
}

fn as_set(nodes: &[u32]) -> Vec<u32> {
    let mut v = nodes.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// Mean of `dist` over the distinct nodes in `from`; `+∞` if any is unreachable.
pub fn mean_over(dist: &[f64], from: &[u32]) -> f64 {
    let set = as_set(from);
    set.iter().map(|&n| dist[n as usize]).sum::<f64>() / set.len() as f64
}

fn directed(graph: &GridGraph, from: &[u32], to_sets: &[Vec<u32>]) -> Result<f64, MetricError> {
    if from.is_empty() {
        return Err(MetricError::EmptySource);
    }
    let targets: Vec<u32> = as_set(&to_sets.concat());
    if targets.is_empty() {
        return Err(MetricError::NoTargets);
    }
    // Undirected graph: distance to the nearest target equals the
    // multi-source distance from all targets.
    Ok(mean_over(&graph.distances_from(&targets), from))
}

/// Proposal-to-entity distance in meters.
pub fn p2e(graph: &GridGraph, proposal_nodes: &[u32], entity_node_sets: &[Vec<u32>]) -> Result<f64, MetricError> {
    directed(graph, proposal_nodes, entity_node_sets)
}

/// Entity-to-proposal distance in meters.
pub fn e2p(graph: &GridGraph, entity_nodes: &[u32], proposal_node_sets: &[Vec<u32>]) -> Result<f64, MetricError> {
    directed(graph, entity_nodes, proposal_node_sets)
}
