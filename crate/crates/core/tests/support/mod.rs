//! Brute-force reference implementations and the randomized checks that
//! compare the library against them. Each check returns a one-line summary
//! on success and a description of the first mismatch on failure.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tagmap_core::evaluation::{
    assign_nodes_object, assign_nodes_proposal, assign_nodes_region, build_grid_graph, e2p, inside_scene, p2e,
    GridGraph, GridParams, InsideSceneParams, MeshBuilder, MetricError, Scene,
};
use tagmap_core::geometry::{Aabb, Intrinsics, Pose};
use tagmap_core::localization::{dbscan, extract_levels, make_frustum, nms, vote, Proposal, VoxelGrid};
use tagmap_core::store::Viewpoint;

pub type Check = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn bx(min: [f64; 3], max: [f64; 3]) -> Aabb {
    Aabb::from_arrays(min, max).unwrap()
}

// ---------------------------------------------------------------- voting

fn random_viewpoint(r: &mut ChaCha8Rng, id: u64) -> Viewpoint {
    let width = r.random_range(32..640u32);
    let height = ((width as f64 * r.random_range(0.5..1.0)) as u32).max(1);
    let f = r.random_range(0.7..1.2) * width as f64;
    let intrinsics = Intrinsics {
        fx: f,
        fy: f * r.random_range(0.9..1.1),
        cx: width as f64 * r.random_range(0.3..0.7),
        cy: height as f64 * r.random_range(0.3..0.7),
        width,
        height,
    };
    let eye = Point3::new(r.random_range(-1.5..1.5), r.random_range(-1.5..1.5), r.random_range(-1.5..1.5));
    let target = Point3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
    let pose = Pose::look_at(eye, target, Vector3::z()).unwrap_or_else(|_| Pose::identity());
    Viewpoint { id, pose, intrinsics, far_plane_dist: r.random_range(1.0..3.0) }
}

/// Voxel votes against counting, for every voxel center, the frustums containing it.
pub fn voting(scenes: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut voxels = 0usize;
    let mut max_dim = 0usize;
    for scene in 0..scenes {
        let n = r.random_range(1..=20);
        let frustums: Vec<_> =
            (0..n).map(|i| make_frustum(&random_viewpoint(&mut r, i as u64), 0.2).unwrap()).collect();
        let grid = vote(&frustums, 0.2);
        max_dim = max_dim.max(grid.dims.into_iter().max().unwrap());
        let bounds = grid.bounds();
        for f in &frustums {
            if f.corners().iter().any(|c| !bounds.contains_point(c, 1e-9)) {
                return Err(format!("scene {scene}: grid does not cover a frustum"));
            }
        }
        for (i, v) in grid.votes.iter().enumerate() {
            let c = grid.center(i);
            let expected = frustums.iter().filter(|f| f.contains(&c)).count() as u32;
            if *v != expected {
                return Err(format!("scene {scene}: voxel {i} voted {v}, expected {expected}"));
            }
        }
        voxels += grid.len();
    }
    if max_dim > 50 {
        return Err(format!("grid dimension {max_dim} exceeds 50"));
    }
    Ok(format!("{scenes} scenes, {voxels} voxels, max grid dimension {max_dim}"))
}

// ---------------------------------------------------------------- DBSCAN

/// Textbook DBSCAN over all pairs. Core points form clusters through
/// eps-connectivity; a border point joins the adjacent cluster whose
/// lowest core index is smallest (the one a scan in index order reaches first).
pub fn dbscan_reference(points: &[Point3<f64>], eps: f64, min_points: usize) -> BTreeSet<Vec<usize>> {
    let n = points.len();
    let near = |i: usize, j: usize| (points[i] - points[j]).norm() <= eps;
    let core: Vec<bool> = (0..n).map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_points).collect();
    let mut component = vec![usize::MAX; n];
    for start in 0..n {
        if !core[start] || component[start] != usize::MAX {
            continue;
        }
        component[start] = start;
        let mut stack = vec![start];
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if core[j] && component[j] == usize::MAX && near(i, j) {
                    component[j] = start;
                    stack.push(j);
                }
            }
        }
    }
    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let label = if core[i] {
            Some(component[i])
        } else {
            (0..n).filter(|&j| core[j] && near(i, j)).map(|j| component[j]).min()
        };
        if let Some(l) = label {
            clusters.entry(l).or_default().push(i);
        }
    }
    clusters.into_values().collect()
}

fn blob_points(r: &mut ChaCha8Rng, n: usize) -> Vec<Point3<f64>> {
    let blobs: Vec<Point3<f64>> = (0..r.random_range(1..6))
        .map(|_| Point3::new(r.random_range(0.0..5.0), r.random_range(0.0..5.0), r.random_range(0.0..3.0)))
        .collect();
    (0..n)
        .map(|_| {
            if r.random_bool(0.2) {
                Point3::new(r.random_range(0.0..5.0), r.random_range(0.0..5.0), r.random_range(0.0..3.0))
            } else {
                let c = blobs[r.random_range(0..blobs.len())];
                let s = 0.35;
                c + Vector3::new(r.random_range(-s..s), r.random_range(-s..s), r.random_range(-s..s)) * 1.5
            }
        })
        .collect()
}

pub fn dbscan_equivalence(sets: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let (mut clusters, mut points) = (0, 0);
    for set in 0..sets {
        let n = r.random_range(0..=500);
        let pts = blob_points(&mut r, n);
        let got: BTreeSet<Vec<usize>> = dbscan(&pts, 0.4, 5).into_iter().collect();
        let expected = dbscan_reference(&pts, 0.4, 5);
        if got != expected {
            return Err(format!("set {set} (n = {n}): {} clusters vs {} in the reference", got.len(), expected.len()));
        }
        clusters += got.len();
        points += n;
    }
    Ok(format!("{sets} point sets, {points} points, {clusters} clusters"))
}

// ---------------------------------------------------------------- NMS

fn proposal(level: u32, aabb: Aabb) -> Proposal {
    Proposal { aabb, confidence_level: level, level_fraction: 0.0, voxel_count: 1 }
}

/// Random boxes on a 0.1 m lattice, many of them nested, with duplicates.
pub fn nested_boxes(r: &mut ChaCha8Rng, n: usize) -> Vec<Proposal> {
    let mut out: Vec<Proposal> = Vec::new();
    while out.len() < n {
        let level = r.random_range(1..=4);
        if !out.is_empty() && r.random_bool(0.6) {
            let parent = out[r.random_range(0..out.len())].aabb;
            let lo = parent.min.map(|v| (v * 10.0).round() as i64);
            let hi = parent.max.map(|v| (v * 10.0).round() as i64);
            let mut min = [0.0; 3];
            let mut max = [0.0; 3];
            for i in 0..3 {
                let a = r.random_range(lo[i]..=hi[i]);
                let b = r.random_range(a..=hi[i]);
                (min[i], max[i]) = (a as f64 / 10.0, b as f64 / 10.0);
            }
            let child = if r.random_bool(0.15) { parent } else { bx(min, max) };
            out.push(proposal(level, child));
        } else {
            let mut min = [0.0; 3];
            let mut max = [0.0; 3];
            for i in 0..3 {
                let a = r.random_range(0..15i64);
                let b = r.random_range(a + 1..=20);
                (min[i], max[i]) = (a as f64 / 10.0, b as f64 / 10.0);
            }
            out.push(proposal(level, bx(min, max)));
        }
    }
    out
}

type BoxKey = (u32, [i64; 6]);

fn key(p: &Proposal) -> BoxKey {
    let k = |v: f64| (v * 1e6).round() as i64;
    (p.confidence_level, [k(p.aabb.min.x), k(p.aabb.min.y), k(p.aabb.min.z), k(p.aabb.max.x), k(p.aabb.max.y), k(p.aabb.max.z)])
}

fn contains(outer: &Aabb, inner: &Aabb) -> bool {
    (0..3).all(|i| outer.min[i] <= inner.min[i] + 1e-9 && inner.max[i] <= outer.max[i] + 1e-9)
}

/// Containment filter over all pairs: a proposal goes if it contains any
/// proposal of a strictly higher level (containment is transitive, so this
/// equals "contains a surviving one"); identical boxes at one level collapse.
pub fn nms_reference(proposals: &[Proposal]) -> BTreeSet<BoxKey> {
    proposals
        .iter()
        .filter(|p| !proposals.iter().any(|q| q.confidence_level > p.confidence_level && contains(&p.aabb, &q.aabb)))
        .map(key)
        .collect()
}

pub fn nms_soundness(sets: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let mut kept = 0;
    for set in 0..sets {
        let n = r.random_range(1..=20);
        let input = nested_boxes(&mut r, n);
        let out = nms(&input);
        let got: Vec<BoxKey> = out.iter().map(key).collect();
        let unique: BTreeSet<BoxKey> = got.iter().copied().collect();
        if unique.len() != got.len() {
            return Err(format!("set {set}: duplicate survivors"));
        }
        if unique != nms_reference(&input) {
            return Err(format!("set {set}: survivors differ from the containment filter"));
        }
        for a in &out {
            for b in &out {
                if b.confidence_level > a.confidence_level && contains(&a.aabb, &b.aabb) {
                    return Err(format!("set {set}: a level-{} box contains a level-{} box", a.confidence_level, b.confidence_level));
                }
            }
        }
        kept += out.len();
    }
    Ok(format!("{sets} box sets, {kept} survivors"))
}

// ---------------------------------------------------------------- levels

/// Vote levels are nested and equal direct thresholding at
/// `max(1, ceil(k/4 · v_max))` for the default quarter fractions.
pub fn level_nesting(grids: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let fractions = [0.0, 0.25, 0.5, 0.75];
    for g in 0..grids {
        let dims = [r.random_range(1..12), r.random_range(1..12), r.random_range(1..12)];
        let top = r.random_range(0..30u32);
        let votes = (0..dims[0] * dims[1] * dims[2]).map(|_| r.random_range(0..=top)).collect();
        let grid = VoxelGrid { origin: Point3::origin(), voxel_size: 0.2, dims, votes };
        let levels = extract_levels(&grid, &fractions);
        let vmax = grid.max_vote();
        if vmax == 0 {
            if !levels.is_empty() {
                return Err(format!("grid {g}: levels from an empty grid"));
            }
            continue;
        }
        let mut thresholds: Vec<u32> = (0..4u32).map(|k| ((k * vmax).div_ceil(4)).max(1)).collect();
        thresholds.dedup();
        if levels.iter().map(|l| l.threshold).collect::<Vec<_>>() != thresholds {
            return Err(format!("grid {g}: thresholds differ"));
        }
        for l in &levels {
            let direct: Vec<usize> = (0..grid.len()).filter(|&i| grid.votes[i] >= l.threshold).collect();
            if l.voxels != direct {
                return Err(format!("grid {g}: level {} voxels differ", l.threshold));
            }
        }
        for w in levels.windows(2) {
            let lower: BTreeSet<usize> = w[0].voxels.iter().copied().collect();
            if !w[1].voxels.iter().all(|v| lower.contains(v)) {
                return Err(format!("grid {g}: level {} is not inside level {}", w[1].threshold, w[0].threshold));
            }
        }
    }
    Ok(format!("{grids} grids"))
}

// ---------------------------------------------------------------- P2E / E2P

#[allow(clippy::needless_range_loop)]
fn floyd_warshall(nodes: &[Point3<f64>], edges: &[(u32, u32)]) -> Vec<Vec<f64>> {
    let n = nodes.len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for &(a, b) in edges {
        let w = (nodes[a as usize] - nodes[b as usize]).norm();
        let (a, b) = (a as usize, b as usize);
        d[a][b] = d[a][b].min(w);
        d[b][a] = d[b][a].min(w);
    }
    for k in 0..n {
        for i in 0..n {
            let dik = d[i][k];
            if dik.is_infinite() {
                continue;
            }
            for j in 0..n {
                let via = dik + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

/// Mean over distinct sources of the distance to the nearest target.
fn directed_reference(d: &[Vec<f64>], sources: &[u32], targets: &[Vec<u32>]) -> Result<f64, MetricError> {
    let sources: BTreeSet<u32> = sources.iter().copied().collect();
    let targets: BTreeSet<u32> = targets.iter().flatten().copied().collect();
    if sources.is_empty() {
        return Err(MetricError::EmptySource);
    }
    if targets.is_empty() {
        return Err(MetricError::NoTargets);
    }
    let total: f64 = sources
        .iter()
        .map(|&s| targets.iter().map(|&t| d[s as usize][t as usize]).fold(f64::INFINITY, f64::min))
        .sum();
    Ok(total / sources.len() as f64)
}

fn same(a: &Result<f64, MetricError>, b: &Result<f64, MetricError>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) if x.is_infinite() || y.is_infinite() => x == y,
        (Ok(x), Ok(y)) => (x - y).abs() <= 1e-9,
        (Err(x), Err(y)) => x == y,
        _ => false,
    }
}

fn node_subset(r: &mut ChaCha8Rng, n: usize, max: usize) -> Vec<u32> {
    // Duplicates are allowed on purpose: node lists are sets.
    (0..r.random_range(0..=max)).map(|_| r.random_range(0..n as u32)).collect()
}

pub fn path_metrics(graphs: usize, seed: u64) -> Check {
    let mut r = rng(seed);
    let (mut finite, mut infinite) = (0, 0);
    for g in 0..graphs {
        let n = r.random_range(1..=200);
        let nodes: Vec<Point3<f64>> = (0..n)
            .map(|_| Point3::new(r.random_range(0.0..10.0), r.random_range(0.0..10.0), r.random_range(0.0..3.0)))
            .collect();
        let radius = r.random_range(0.8..3.0);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if (nodes[a] - nodes[b]).norm() < radius && r.random_bool(0.7) {
                    edges.push((a as u32, b as u32));
                }
            }
        }
        let d = floyd_warshall(&nodes, &edges);
        let graph = GridGraph::from_parts(nodes, edges, 1.0).map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let proposal = node_subset(&mut r, n, 6);
            let instances: Vec<Vec<u32>> = (0..r.random_range(0..3)).map(|_| node_subset(&mut r, n, 6)).collect();
            let pairs = [
                (p2e(&graph, &proposal, &instances), directed_reference(&d, &proposal, &instances)),
                (e2p(&graph, &proposal, &instances), directed_reference(&d, &proposal, &instances)),
            ];
            for (got, expected) in pairs {
                if !same(&got, &expected) {
                    return Err(format!("graph {g} (n = {n}): {got:?} vs reference {expected:?}"));
                }
                match got {
                    Ok(v) if v.is_finite() => finite += 1,
                    Ok(_) => infinite += 1,
                    Err(_) => {}
                }
            }
        }
    }
    Ok(format!("{graphs} graphs, {finite} finite and {infinite} unreachable values"))
}

// ---------------------------------------------------------------- grid graph

/// Segment–triangle crossing by plane side test and edge-inclusive
/// barycentric containment; crossings within 1e-6 m of an endpoint are ignored.
pub fn segment_crosses(a: &Point3<f64>, b: &Point3<f64>, tri: &[Point3<f64>; 3]) -> bool {
    let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
    let da = n.dot(&(a - tri[0]));
    let db = n.dot(&(b - tri[0]));
    if da * db > 0.0 || da == db {
        return false;
    }
    let t = da / (da - db);
    let len = (b - a).norm();
    if t * len <= 1e-6 || t * len >= len - 1e-6 {
        return false;
    }
    let p = a + (b - a) * t;
    (0..3).all(|i| {
        let (u, v) = (tri[i], tri[(i + 1) % 3]);
        (v - u).cross(&(p - u)).dot(&n) >= 0.0
    })
}

fn blocked(scene: &Scene, a: &Point3<f64>, b: &Point3<f64>) -> bool {
    (0..scene.mesh().triangles().len()).any(|i| segment_crosses(a, b, &scene.mesh().triangle(i)))
}

/// Inside test by sorting every vertex by distance.
pub fn inside_reference(p: &Point3<f64>, scene: &Scene, params: &InsideSceneParams) -> bool {
    let verts = scene.mesh().vertices();
    let normals = scene.mesh().normals();
    let mut order: Vec<(f64, usize)> = verts.iter().enumerate().map(|(i, v)| ((p - v).norm(), i)).collect();
    order.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let k = params.k_neighbors.min(order.len());
    let near = &order[..k];
    let mean_dist = near.iter().map(|x| x.0).sum::<f64>() / k as f64;
    if mean_dist > params.mean_dist_threshold {
        return false;
    }
    let mean_dot = near
        .iter()
        .map(|&(d, i)| if d > 0.0 { (p - verts[i]).dot(&normals[i]) / d } else { 0.0 })
        .sum::<f64>()
        / k as f64;
    mean_dot <= params.dot_threshold
}

fn axis_samples(min: f64, max: f64, r: f64) -> Vec<f64> {
    let count = ((max - min) / r + 1e-9).floor() as usize;
    let margin = (max - min - (count as f64 - 1.0) * r) / 2.0;
    (0..count).map(|i| min + margin + i as f64 * r).collect()
}

type Edge = ([i64; 3], [i64; 3]);

fn grid_key(p: &Point3<f64>) -> [i64; 3] {
    [(p.x * 1e6).round() as i64, (p.y * 1e6).round() as i64, (p.z * 1e6).round() as i64]
}

/// Nodes and edges by direct application of the lattice, inside and
/// collision predicates to every lattice point and every pair of points.
pub fn grid_reference(scene: &Scene, params: &GridParams) -> (BTreeSet<[i64; 3]>, BTreeSet<Edge>) {
    let b = scene.mesh().bounds();
    let r = params.resolution;
    let xs = axis_samples(b.min.x, b.max.x, r);
    let ys = axis_samples(b.min.y, b.max.y, r);
    let zs = axis_samples(b.min.z, b.max.z, r);
    let mut nodes = Vec::new();
    for &x in &xs {
        for &y in &ys {
            for &z in &zs {
                let p = Point3::new(x, y, z);
                if inside_reference(&p, scene, &params.inside) {
                    nodes.push(p);
                }
            }
        }
    }
    let mut edges = BTreeSet::new();
    for (i, a) in nodes.iter().enumerate() {
        for c in &nodes[i + 1..] {
            if ((a - c).norm() - r).abs() < 1e-9 && !blocked(scene, a, c) {
                let (ka, kc) = (grid_key(a), grid_key(c));
                edges.insert((ka.min(kc), ka.max(kc)));
            }
        }
    }
    (nodes.iter().map(grid_key).collect(), edges)
}

fn graph_sets(graph: &GridGraph) -> (BTreeSet<[i64; 3]>, BTreeSet<Edge>) {
    let nodes = graph.nodes().iter().map(grid_key).collect();
    let edges = graph
        .edges()
        .iter()
        .map(|&(a, b)| {
            let (ka, kb) = (grid_key(&graph.nodes()[a as usize]), grid_key(&graph.nodes()[b as usize]));
            (ka.min(kb), ka.max(kb))
        })
        .collect();
    (nodes, edges)
}

/// The 2 m empty box room at 0.5 m resolution.
pub fn box_scene() -> Scene {
    let mut m = MeshBuilder::new();
    m.add_box(&bx([0.0; 3], [2.0; 3]), 0.25);
    Scene::new(m.build().unwrap())
}

/// A 4 × 3 × 2.5 m room split by a partial wall and holding a raised block.
pub fn partitioned_scene() -> Scene {
    let mut m = MeshBuilder::new();
    m.add_box(&bx([0.0, 0.0, 0.0], [4.0, 3.0, 2.5]), 0.25);
    m.add_solid(&bx([1.8, 0.0, 0.1], [2.2, 1.6, 2.4]), 0.25);
    m.add_solid(&bx([2.9, 1.9, 0.35], [3.6, 2.6, 0.95]), 0.25);
    Scene::new(m.build().unwrap())
}

pub fn grid_transcription() -> Check {
    let params = GridParams::default();
    let mut summary = Vec::new();
    for (name, scene) in [("2 m box", box_scene()), ("partitioned room", partitioned_scene())] {
        let graph = build_grid_graph(&scene, &params).map_err(|e| e.to_string())?;
        let (nodes, edges) = graph_sets(&graph);
        let (ref_nodes, ref_edges) = grid_reference(&scene, &params);
        if nodes != ref_nodes {
            return Err(format!("{name}: {} nodes vs {} in the reference", nodes.len(), ref_nodes.len()));
        }
        if edges != ref_edges || edges.len() != graph.edges().len() {
            return Err(format!("{name}: {} edges vs {} in the reference", graph.edges().len(), ref_edges.len()));
        }
        summary.push(format!("{name}: {} nodes, {} edges", nodes.len(), edges.len()));
    }
    Ok(summary.join("; "))
}

// ---------------------------------------------------------------- inside test

/// Distance from `p` to the surface of `b`.
fn surface_distance(b: &Aabb, p: &Point3<f64>) -> f64 {
    if b.contains_point(p, 0.0) {
        (0..3).map(|i| (p[i] - b.min[i]).min(b.max[i] - p[i])).fold(f64::INFINITY, f64::min)
    } else {
        b.distance_to_point(p)
    }
}

/// Ray-parity classification against the closed surfaces of the partitioned
/// room, for points at least 0.4 m from every surface. The nearest-vertex
/// normal vote only separates the sides of a solid that is thicker than the
/// neighborhood it samples, so the scene's solids are at least 0.4 m thick
/// and do not touch the room shell.
pub fn inside_parity(points: usize, seed: u64) -> Check {
    let scene = partitioned_scene();
    let solids = [bx([0.0, 0.0, 0.0], [4.0, 3.0, 2.5]), bx([1.8, 0.0, 0.1], [2.2, 1.6, 2.4]), bx([2.9, 1.9, 0.35], [3.6, 2.6, 0.95])];
    let params = InsideSceneParams::default();
    let dir = Vector3::new(0.5772, 0.3191, 0.7519).normalize();
    let triangles: Vec<_> = (0..scene.mesh().triangles().len()).map(|i| scene.mesh().triangle(i)).collect();
    let mut r = rng(seed);
    let (mut checked, mut inside) = (0, 0);
    while checked < points {
        // Half the samples come from inside the room so both outcomes are well represented.
        let p = if r.random_bool(0.5) {
            Point3::new(r.random_range(0.0..4.0), r.random_range(0.0..3.0), r.random_range(0.0..2.5))
        } else {
            Point3::new(r.random_range(-1.0..5.0), r.random_range(-1.0..4.0), r.random_range(-1.0..3.5))
        };
        if solids.iter().any(|s| surface_distance(s, &p) < 0.4) {
            continue;
        }
        let crossings = triangles
            .iter()
            .filter(|t| tagmap_core::raycast::intersect_triangle(&p, &dir, t).is_some_and(|d| d > 0.0))
            .count();
        let expected = crossings % 2 == 1;
        if inside_scene(&p, &scene, &params) != expected {
            return Err(format!("{p:?}: parity says inside = {expected}"));
        }
        checked += 1;
        inside += expected as usize;
    }
    Ok(format!("{checked} points ({inside} in free space)"))
}

// ---------------------------------------------------------------- assignment

fn in_box(b: &Aabb, p: &Point3<f64>) -> bool {
    (0..3).all(|i| p[i] >= b.min[i] - 1e-9 && p[i] <= b.max[i] + 1e-9)
}

fn clamp_to(b: &Aabb, p: &Point3<f64>) -> Point3<f64> {
    Point3::new(p.x.clamp(b.min.x, b.max.x), p.y.clamp(b.min.y, b.max.y), p.z.clamp(b.min.z, b.max.z))
}

fn ring_reference(graph: &GridGraph, scene: &Scene, b: &Aabb, delta: f64, skip_inside: bool) -> Vec<u32> {
    let grown = bx(
        [b.min.x - delta, b.min.y - delta, b.min.z - delta],
        [b.max.x + delta, b.max.y + delta, b.max.z + delta],
    );
    (0..graph.nodes().len() as u32)
        .filter(|&n| {
            let p = graph.nodes()[n as usize];
            in_box(&grown, &p) && !(skip_inside && in_box(b, &p)) && !blocked(scene, &p, &clamp_to(b, &p))
        })
        .collect()
}

pub fn proposal_reference(graph: &GridGraph, scene: &Scene, b: &Aabb, delta: f64) -> Vec<u32> {
    let inside: Vec<u32> = (0..graph.nodes().len() as u32).filter(|&n| in_box(b, &graph.nodes()[n as usize])).collect();
    if inside.is_empty() {
        ring_reference(graph, scene, b, delta, false)
    } else {
        inside
    }
}

pub fn object_reference(graph: &GridGraph, scene: &Scene, b: &Aabb, delta: f64) -> Vec<u32> {
    let mut nodes: Vec<u32> = (0..graph.nodes().len() as u32).filter(|&n| in_box(b, &graph.nodes()[n as usize])).collect();
    nodes.extend(ring_reference(graph, scene, b, delta, true));
    nodes.sort_unstable();
    nodes
}

pub fn assignment_transcription(boxes: usize, seed: u64) -> Check {
    let scene = partitioned_scene();
    let graph = build_grid_graph(&scene, &GridParams::default()).map_err(|e| e.to_string())?;
    let mut r = rng(seed);
    let mut ring_cases = 0;
    for i in 0..boxes {
        let min = [r.random_range(-0.2..4.0), r.random_range(-0.2..3.0), r.random_range(-0.2..2.5)];
        let size = if r.random_bool(0.5) { 0.3 } else { 1.5 };
        let max = min.map(|v| v + r.random_range(0.0..size));
        let b = bx(min, max);
        let delta = r.random_range(0.1..1.0);
        let got = assign_nodes_proposal(&graph, &scene, &b, delta);
        if got != proposal_reference(&graph, &scene, &b, delta) {
            return Err(format!("box {i}: proposal nodes differ"));
        }
        if assign_nodes_object(&graph, &scene, &b, delta) != object_reference(&graph, &scene, &b, delta) {
            return Err(format!("box {i}: object nodes differ"));
        }
        let region: Vec<u32> = (0..graph.nodes().len() as u32).filter(|&n| in_box(&b, &graph.nodes()[n as usize])).collect();
        if assign_nodes_region(&graph, &b) != region {
            return Err(format!("box {i}: region nodes differ"));
        }
        ring_cases += region.is_empty() as usize;
    }
    Ok(format!("{boxes} boxes ({ring_cases} needing the visibility ring)"))
}
