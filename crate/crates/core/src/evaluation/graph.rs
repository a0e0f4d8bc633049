//! Collision-free lattice graph spanning a scene, used to approximate
//! shortest paths between proposals and labeled entities.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use nalgebra::Point3;
use ordered_float::OrderedFloat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::knn::KdTree;
use super::mesh::SceneMesh;
use super::EvalError;
use crate::geometry::Aabb;
use crate::raycast::TriangleBvh;

/// Mesh plus the acceleration structures needed by the evaluation queries.
#[derive(Debug, Clone)]
pub struct Scene {
    mesh: SceneMesh,
    kdtree: KdTree,
    bvh: TriangleBvh,
}

impl Scene {
    pub fn new(mesh: SceneMesh) -> Self {
        let kdtree = KdTree::new(mesh.vertices().to_vec());
        let bvh = TriangleBvh::new((0..mesh.triangles().len()).map(|i| mesh.triangle(i)).collect());
        Self { mesh, kdtree, bvh }
    }

    pub fn mesh(&self) -> &SceneMesh {
        &self.mesh
    }

    pub fn bvh(&self) -> &TriangleBvh {
        &self.bvh
    }

    /// True when the straight segment between the points crosses no triangle.
    pub fn collision_free(&self, a: &Point3<f64>, b: &Point3<f64>) -> bool {
        !self.bvh.segment_blocked(a, b)
    }
}

/// Parameters of the nearest-vertex inside test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InsideSceneParams {
    pub k_neighbors: usize,
    /// Points whose mean distance to the k nearest vertices exceeds this are outside (meters).
    pub mean_dist_threshold: f64,
    /// Points whose mean normal dot product exceeds this are outside.
    pub dot_threshold: f64,
}

impl Default for InsideSceneParams {
    fn default() -> Self {
        Self { k_neighbors: 30, mean_dist_threshold: 2.0, dot_threshold: 0.0 }
    }
}

/// Whether `point` lies inside the scene, judged from its nearest mesh vertices.
///
/// Outside if the vertices are far on average, or if the point lies on the
/// front side of their normals on average.
pub fn inside_scene(point: &Point3<f64>, scene: &Scene, params: &InsideSceneParams) -> bool {
    let neighbors = scene.kdtree.nearest(point, params.k_neighbors);
    if neighbors.is_empty() {
        return false;
    }
    let n = neighbors.len() as f64;
    let mean_dist = neighbors.iter().map(|(_, d)| d).sum::<f64>() / n;
    if mean_dist > params.mean_dist_threshold {
        return false;
    }
    let normals = scene.mesh.normals();
    let vertices = scene.mesh.vertices();
    let mean_dot = neighbors
        .iter()
        .map(|&(i, d)| if d > 0.0 { (point - vertices[i]).dot(&normals[i]) / d } else { 0.0 })
        .sum::<f64>()
        / n;
    mean_dot <= params.dot_threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    /// Lattice spacing in meters.
    pub resolution: f64,
    pub inside: InsideSceneParams,
}

impl Default for GridParams {
    fn default() -> Self {
        Self { resolution: 0.5, inside: InsideSceneParams::default() }
    }
}

/// Undirected graph over lattice points with Euclidean edge weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridGraph {
    nodes: Vec<Point3<f64>>,
    edges: Vec<(u32, u32)>,
    resolution: f64,
    #[serde(skip)]
    adjacency: Vec<Vec<(u32, f64)>>,
}

impl GridGraph {
    /// Graph from explicit nodes and edges; weights are Euclidean lengths.
    pub fn from_parts(nodes: Vec<Point3<f64>>, edges: Vec<(u32, u32)>, resolution: f64) -> Result<Self, EvalError> {
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(a, b) in &edges {
            let (ai, bi) = (a as usize, b as usize);
            if ai >= nodes.len() || bi >= nodes.len() || a == b {
                return Err(EvalError::InvalidGraph(format!("bad edge ({a}, {b})")));
            }
            let w = (nodes[ai] - nodes[bi]).norm();
            adjacency[ai].push((b, w));
            adjacency[bi].push((a, w));
        }
        Ok(Self { nodes, edges, resolution, adjacency })
    }

    pub fn nodes(&self) -> &[Point3<f64>] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn neighbors(&self, node: u32) -> &[(u32, f64)] {
        &self.adjacency[node as usize]
    }

    /// Nodes inside `b` (boundary inclusive, 1e-9 tolerance), ascending.
    pub fn nodes_in_box(&self, b: &Aabb) -> Vec<u32> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, p)| b.contains_point(p, 1e-9))
            .map(|(i, _)| i as u32)
            .collect()
    }

    /// Multi-source Dijkstra: distance from the nearest source to every node
    /// (`+∞` when unreachable).
    pub fn distances_from(&self, sources: &[u32]) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            dist[s as usize] = 0.0;
            heap.push(Reverse((OrderedFloat(0.0), s)));
        }
        while let Some(Reverse((OrderedFloat(d), u))) = heap.pop() {
            if d > dist[u as usize] {
                continue;
            }
            for &(v, w) in &self.adjacency[u as usize] {
                let nd = d + w;
                if nd < dist[v as usize] {
                    dist[v as usize] = nd;
                    heap.push(Reverse((OrderedFloat(nd), v)));
                }
            }
        }
        dist
    }
}

/// Lattice points along one axis: `floor(extent / r)` points centered in the extent.
pub fn lattice_axis(min: f64, max: f64, resolution: f64) -> Vec<f64> {
    let extent = max - min;
    let count = (extent / resolution + 1e-9).floor().max(0.0) as usize;
    if count == 0 {
        return Vec::new();
    }
    let start = min + (extent - (count - 1) as f64 * resolution) / 2.0;
    (0..count).map(|i| start + i as f64 * resolution).collect()
}

/// Builds the grid graph of a scene.
///
/// Lattice nodes span the mesh bounds; nodes failing [`inside_scene`] are
/// dropped, and 6-adjacent surviving nodes are joined when the segment
/// between them crosses no triangle.
pub fn build_grid_graph(scene: &Scene, params: &GridParams) -> Result<GridGraph, EvalError> {
    let r = params.resolution;
    if !(r > 0.0 && r.is_finite()) {
        return Err(EvalError::InvalidParameter(format!("resolution must be positive, got {r}")));
    }
    let bounds = scene.mesh.bounds();
    let axes = [0, 1, 2].map(|a| lattice_axis(bounds.min[a], bounds.max[a], r));
    let dims = axes.each_ref().map(Vec::len);
    let total = dims[0] * dims[1] * dims[2];
    if total == 0 {
        return Err(EvalError::SceneTooSmall { resolution: r });
    }
    let lattice = |i: usize| {
        let x = i % dims[0];
        let y = (i / dims[0]) % dims[1];
        let z = i / (dims[0] * dims[1]);
        ([x, y, z], Point3::new(axes[0][x], axes[1][y], axes[2][z]))
    };
    let inside: Vec<bool> = (0..total).into_par_iter().map(|i| inside_scene(&lattice(i).1, scene, &params.inside)).collect();
    let mut node_of = vec![u32::MAX; total];
    let mut nodes = Vec::new();
    for i in (0..total).filter(|&i| inside[i]) {
        node_of[i] = nodes.len() as u32;
        nodes.push(lattice(i).1);
    }
    if nodes.is_empty() {
        return Err(EvalError::SceneTooSmall { resolution: r });
    }
    let strides = [1, dims[0], dims[0] * dims[1]];
    let edges: Vec<(u32, u32)> = (0..total)
        .into_par_iter()
        .filter(|&i| inside[i])
        .flat_map_iter(|i| {
            let (c, p) = lattice(i);
            let mut out = Vec::with_capacity(3);
            for axis in 0..3 {
                if c[axis] + 1 >= dims[axis] {
                    continue;
                }
                let j = i + strides[axis];
                if inside[j] && scene.collision_free(&p, &lattice(j).1) {
                    out.push((node_of[i], node_of[j]));
                }
            }
            out
        })
        .collect();
    GridGraph::from_parts(nodes, edges, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::mesh::MeshBuilder;

    fn box_scene(spacing: f64) -> Scene {
        let mut b = MeshBuilder::new();
        b.add_box(&Aabb::from_arrays([0.0; 3], [2.0; 3]).unwrap(), spacing);
        Scene::new(b.build().unwrap())
    }

    #[test]
    fn inside_and_outside_points() {
        let scene = box_scene(0.25);
        let params = InsideSceneParams::default();
        assert!(!inside_scene(&Point3::new(12.0, 1.0, 1.0), &scene, &params));
        assert!(inside_scene(&Point3::new(1.0, 1.0, 1.0), &scene, &params));
    }

    #[test]
    fn lattice_is_centered() {
        assert_eq!(lattice_axis(0.0, 2.0, 0.5), vec![0.25, 0.75, 1.25, 1.75]);
        assert_eq!(lattice_axis(0.0, 1.2, 0.5), vec![0.35, 0.85]);
        assert!(lattice_axis(0.0, 0.4, 0.5).is_empty());
    }

    #[test]
    fn box_graph_is_full_lattice() {
        let graph = build_grid_graph(&box_scene(0.25), &GridParams::default()).unwrap();
        assert_eq!(graph.nodes().len(), 64);
        assert_eq!(graph.edges().len(), 3 * 4 * 4 * 3);
    }

    #[test]
    fn coarse_resolution_is_an_error() {
        let err = build_grid_graph(&box_scene(0.5), &GridParams { resolution: 3.0, ..Default::default() });
        assert!(matches!(err, Err(EvalError::SceneTooSmall { .. })));
    }

    #[test]
    fn dijkstra_on_path() {
        let nodes = (0..3).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect();
        let g = GridGraph::from_parts(nodes, vec![(0, 1), (1, 2)], 1.0).unwrap();
        assert_eq!(g.distances_from(&[0]), vec![0.0, 1.0, 2.0]);
        assert_eq!(g.distances_from(&[0, 2]), vec![0.0, 1.0, 0.0]);
        assert!(GridGraph::from_parts(vec![Point3::origin()], vec![(0, 1)], 1.0).is_err());
    }
}
