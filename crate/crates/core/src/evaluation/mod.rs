//! Path-length evaluation of tag localizations against labeled scenes.
//!
//! A collision-free lattice graph is built over the scene mesh; proposals
//! and labeled entities are mapped to graph nodes, and the expected
//! shortest-path length between them (P2E / E2P) is thresholded into
//! precision and recall.

mod assign;
mod graph;
mod knn;
mod labels;
mod mesh;
mod metrics;
mod report;

use thiserror::Error;

pub use assign::{assign_nodes_object, assign_nodes_proposal, assign_nodes_region};
pub use graph::{build_grid_graph, inside_scene, lattice_axis, GridGraph, GridParams, InsideSceneParams, Scene};
pub use knn::KdTree;
pub use labels::{
    ClassTagMapping, EntityKind, LabelConvention, LabelSet, LabeledEntity, Mappings, OrientedBox,
};
pub use mesh::{compute_vertex_normals, MeshBuilder, MeshError, SceneMesh};
pub use metrics::{e2p, mean_over, p2e, MetricError};
pub use report::{ClassReport, EvalConfig, EvalReport, Evaluator, KindReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("scene too small for resolution {resolution} m: no grid node survives")]
    SceneTooSmall { resolution: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("labels: {0}")]
    Labels(String),
    #[error("mapping: {0}")]
    Mapping(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}
