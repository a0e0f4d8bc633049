//! The tag-map API exposed to the model as callable tools.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::Point3;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::evaluation::{assign_nodes_proposal, GridGraph, Scene};
use crate::geometry::Aabb;
use crate::localization::{localize_tag, Proposal};
use crate::params::LocalizationParams;
use crate::store::{normalize_tag, TagMap};

pub const TOOL_NAMES: [&str; 4] = ["localize_tag", "region_region_dist", "point_region_dist", "set_goal"];

/// Which distance the two distance tools report.
#[derive(Clone, Default)]
pub enum DistanceMode {
    /// Straight-line distance between boxes (no scene geometry needed).
    #[default]
    Euclidean,
    /// Shortest path on a grid graph between the nodes assigned to each box.
    Graph { scene: Arc<Scene>, graph: Arc<GridGraph> },
}

/// Reference to a localization result, as the model names it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalRef {
    pub tag: String,
    pub proposal_id: usize,
}

/// A proposal selected as the navigation goal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub tag: String,
    pub proposal_id: usize,
    pub aabb: Aabb,
    pub confidence_level: u32,
}

/// Result of one tool call: the JSON payload returned to the model and,
/// for `set_goal`, the recorded goal.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolOutcome {
    pub payload: Value,
    pub goal: Option<Goal>,
    pub is_error: bool,
}

impl ToolOutcome {
    fn ok(payload: Value) -> Self {
        Self { payload, goal: None, is_error: false }
    }

    fn error(message: impl Into<String>) -> Self {
        Self { payload: json!({ "error": message.into() }), goal: None, is_error: true }
    }
}

#[derive(Debug, Deserialize)]
struct BoxArg {
    min: [f64; 3],
    max: [f64; 3],
}

impl BoxArg {
    fn to_aabb(&self, name: &str) -> Result<Aabb, String> {
        Aabb::from_arrays(self.min, self.max).map_err(|e| format!("`{name}`: {e}"))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LocalizeArgs {
    tag: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionRegionArgs {
    r1: BoxArg,
    r2: BoxArg,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointRegionArgs {
    p: [f64; 3],
    r: BoxArg,
}

/// Map-backed tool executor shared by all sessions; localizations are cached per tag.
pub struct ToolBox {
    map: Arc<TagMap>,
    params: LocalizationParams,
    distance: DistanceMode,
    cache: Mutex<HashMap<String, Arc<Vec<Proposal>>>>,
}

fn box_json(b: &Aabb) -> Value {
    json!({ "min": [b.min.x, b.min.y, b.min.z], "max": [b.max.x, b.max.y, b.max.z] })
}

fn box_schema(description: &str) -> Value {
    let vec3 = json!({ "type": "array", "items": { "type": "number" }, "minItems": 3, "maxItems": 3 });
    json!({
        "type": "object",
        "description": description,
        "properties": { "min": vec3, "max": vec3 },
        "required": ["min", "max"]
    })
}

impl ToolBox {
    pub fn new(map: Arc<TagMap>, params: LocalizationParams) -> Self {
        Self { map, params, distance: DistanceMode::Euclidean, cache: Mutex::new(HashMap::new()) }
    }

    pub fn with_distance_mode(mut self, mode: DistanceMode) -> Self {
        self.distance = mode;
        self
    }

    pub fn map(&self) -> &TagMap {
        &self.map
    }

    pub fn params(&self) -> &LocalizationParams {
        &self.params
    }

    /// Proposals for a tag (normalized first), computed once and cached.
    pub fn localize(&self, tag: &str) -> Arc<Vec<Proposal>> {
        let key = normalize_tag(tag);
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Arc::clone(hit);
        }
        let proposals = Arc::new(localize_tag(&self.map, &key, &self.params));
        self.cache.lock().expect("cache lock").entry(key).or_insert(proposals).clone()
    }

    /// Tool definitions in the chat-completions `tools` format.
    pub fn definitions(&self) -> Value {
        let function = |name: &str, description: &str, parameters: Value| {
            json!({ "type": "function", "function": { "name": name, "description": description, "parameters": parameters } })
        };
        json!([
            function(
                "localize_tag",
                "Returns the proposals for a tag from the tag list: axis-aligned boxes (meters) with an integer confidence level, most confident first.",
                json!({
                    "type": "object",
                    "properties": { "tag": { "type": "string", "description": "A tag from the tag list." } },
                    "required": ["tag"]
                })
            ),
            function(
                "region_region_dist",
                "Computes the distance in meters between two regions given as boxes; 0 when they overlap.",
                json!({
                    "type": "object",
                    "properties": { "r1": box_schema("First region."), "r2": box_schema("Second region.") },
                    "required": ["r1", "r2"]
                })
            ),
            function(
                "point_region_dist",
                "Computes the distance in meters to reach region r from point p; 0 when p is inside r.",
                json!({
                    "type": "object",
                    "properties": {
                        "p": { "type": "array", "items": { "type": "number" }, "minItems": 3, "maxItems": 3 },
                        "r": box_schema("Target region.")
                    },
                    "required": ["p", "r"]
                })
            ),
            function(
                "set_goal",
                "Sets the navigation goal to one proposal returned by localize_tag, identified by its tag and proposal id.",
                json!({
                    "type": "object",
                    "properties": {
                        "tag": { "type": "string" },
                        "proposal_id": { "type": "integer", "minimum": 0 }
                    },
                    "required": ["tag", "proposal_id"]
                })
            ),
        ])
    }

    /// Runs one tool call. Malformed or unknown calls yield an error payload
    /// for the model rather than failing the turn.
    pub fn execute(&self, name: &str, arguments: &str) -> ToolOutcome {
        let raw = if arguments.trim().is_empty() { "{}" } else { arguments };
        match name {
            "localize_tag" => match serde_json::from_str::<LocalizeArgs>(raw) {
                Ok(a) => self.localize_payload(&a.tag),
                Err(e) => ToolOutcome::error(format!("invalid arguments for localize_tag: {e}")),
            },
            "region_region_dist" => match serde_json::from_str::<RegionRegionArgs>(raw) {
                Ok(a) => match (a.r1.to_aabb("r1"), a.r2.to_aabb("r2")) {
                    (Ok(r1), Ok(r2)) => self.region_region(&r1, &r2),
                    (Err(e), _) | (_, Err(e)) => ToolOutcome::error(e),
                },
                Err(e) => ToolOutcome::error(format!("invalid arguments for region_region_dist: {e}")),
            },
            "point_region_dist" => match serde_json::from_str::<PointRegionArgs>(raw) {
                Ok(a) if a.p.iter().all(|v| v.is_finite()) => match a.r.to_aabb("r") {
                    Ok(r) => self.point_region(&Point3::from(a.p), &r),
                    Err(e) => ToolOutcome::error(e),
                },
                Ok(_) => ToolOutcome::error("`p` must be finite"),
                Err(e) => ToolOutcome::error(format!("invalid arguments for point_region_dist: {e}")),
            },
            "set_goal" => match serde_json::from_str::<GoalRef>(raw) {
                Ok(g) => self.set_goal(&g),
                Err(e) => ToolOutcome::error(format!("invalid arguments for set_goal: {e}")),
            },
            other => ToolOutcome::error(format!("unknown tool `{other}`; available tools: {}", TOOL_NAMES.join(", "))),
        }
    }

    fn localize_payload(&self, tag: &str) -> ToolOutcome {
        let key = normalize_tag(tag);
        let proposals = self.localize(&key);
        let list: Vec<Value> = proposals
            .iter()
            .enumerate()
            .map(|(id, p)| json!({ "id": id, "aabb": box_json(&p.aabb), "confidence_level": p.confidence_level }))
            .collect();
        let mut payload = json!({ "tag": key, "proposals": list });
        if proposals.is_empty() {
            let note = if self.map.contains_tag(&key) {
                "the tag is in the map but no localization could be formed"
            } else {
                "the tag is not in the tag list"
            };
            payload["note"] = json!(note);
        }
        ToolOutcome::ok(payload)
    }

    fn graph_distance(&self, scene: &Scene, graph: &GridGraph, a: &Aabb, b: &Aabb) -> Option<f64> {
        let from = assign_nodes_proposal(graph, scene, a, graph.resolution());
        let to = assign_nodes_proposal(graph, scene, b, graph.resolution());
        if from.is_empty() || to.is_empty() {
            return None;
        }
        let dist = graph.distances_from(&from);
        let d = to.iter().map(|&n| dist[n as usize]).fold(f64::INFINITY, f64::min);
        d.is_finite().then_some(d)
    }

    fn distance_payload(&self, euclidean: f64, a: &Aabb, b: &Aabb) -> ToolOutcome {
        if !euclidean.is_finite() {
            return ToolOutcome::error("coordinates are too large to measure a distance");
        }
        match &self.distance {
            DistanceMode::Euclidean => ToolOutcome::ok(json!({ "distance": euclidean })),
            DistanceMode::Graph { scene, graph } => match self.graph_distance(scene, graph, a, b) {
                Some(d) => ToolOutcome::ok(json!({ "distance": d, "straight_line_distance": euclidean })),
                None => ToolOutcome::ok(json!({
                    "distance": null,
                    "straight_line_distance": euclidean,
                    "note": "no path found in the scene graph"
                })),
            },
        }
    }

    fn region_region(&self, r1: &Aabb, r2: &Aabb) -> ToolOutcome {
        self.distance_payload(r1.distance_to_box(r2), r1, r2)
    }

    fn point_region(&self, p: &Point3<f64>, r: &Aabb) -> ToolOutcome {
        let point_box = Aabb { min: *p, max: *p };
        self.distance_payload(r.distance_to_point(p), &point_box, r)
    }

    fn set_goal(&self, goal: &GoalRef) -> ToolOutcome {
        let key = normalize_tag(&goal.tag);
        let proposals = self.localize(&key);
        let Some(p) = proposals.get(goal.proposal_id) else {
            return ToolOutcome::error(format!(
                "tag `{key}` has {} proposals; proposal_id {} does not exist",
                proposals.len(),
                goal.proposal_id
            ));
        };
        let g = Goal { tag: key, proposal_id: goal.proposal_id, aabb: p.aabb, confidence_level: p.confidence_level };
        ToolOutcome {
            payload: json!({ "ok": true, "goal": { "tag": g.tag, "proposal_id": g.proposal_id, "aabb": box_json(&g.aabb), "confidence_level": g.confidence_level } }),
            goal: Some(g),
            is_error: false,
        }
    }
}
