//! Procedural scenes with known ground truth, for tests, demos and benchmarks.
//!
//! [`generate_apartment`] builds a two-room apartment mesh with furniture,
//! renders depth frames from cameras placed around each piece of furniture
//! and tags every frame with what is actually visible in it, so the whole
//! construction → localization → evaluation chain can run without a dataset.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::evaluation::{EntityKind, LabeledEntity, MeshBuilder, SceneMesh};
use crate::geometry::{Aabb, Intrinsics, Pose};
use crate::ingestion::{crop_rect, ColorSource, DepthImage, Frame, ScoredTag, ScriptedTagger, TagRequest};
use crate::params::ConstructionParams;
use crate::raycast::{ray_box_entry, TriangleBvh};
use crate::store::{TagMap, Viewpoint, ViewpointId};

/// Something placed in a scene, with the tag a perfect tagger would emit for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEntity {
    pub tag: String,
    pub class: String,
    pub kind: EntityKind,
    pub aabb: Aabb,
}

impl PlantedEntity {
    fn object(tag: &str, class: &str, min: [f64; 3], max: [f64; 3]) -> Self {
        Self {
            tag: tag.into(),
            class: class.into(),
            kind: EntityKind::Object,
            aabb: Aabb::from_arrays(min, max).expect("valid layout box"),
        }
    }

    pub fn label(&self) -> LabeledEntity {
        LabeledEntity { class: self.class.clone(), kind: self.kind, aabb: self.aabb, instance_id: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApartmentConfig {
    pub seed: u64,
    pub image_width: u32,
    pub image_height: u32,
    /// Cameras placed around each object.
    pub views_per_object: usize,
    /// Number of spurious tags, each injected into exactly one frame.
    pub false_positive_tags: usize,
}

impl Default for ApartmentConfig {
    fn default() -> Self {
        Self { seed: 7, image_width: 64, image_height: 48, views_per_object: 6, false_positive_tags: 3 }
    }
}

const HEIGHT: f64 = 2.6;
const WALL_SPACING: f64 = 0.25;

/// A generated scene: mesh, ground truth and rendered frames.
pub struct SyntheticScene {
    pub mesh: SceneMesh,
    pub entities: Vec<PlantedEntity>,
    pub frames: Vec<Frame>,
    /// Per frame id and crop percentage, the tags a perfect tagger emits.
    tags: Arc<BTreeMap<(ViewpointId, u64), Vec<String>>>,
    /// `(frame id, tag)` of every injected false positive.
    pub false_positives: Vec<(ViewpointId, String)>,
}

impl SyntheticScene {
    /// Tagger replaying the precomputed visibility of every frame and crop.
    pub fn tagger(&self) -> ScriptedTagger {
        let tags = Arc::clone(&self.tags);
        ScriptedTagger::new(move |req: &TagRequest<'_>| {
            Ok(tags
                .get(&(req.frame_id, req.crop_percent.to_bits()))
                .map(|t| t.iter().map(|s| ScoredTag::new(s.clone(), 1.0)).collect())
                .unwrap_or_default())
        })
    }

    pub fn labels(&self) -> Vec<LabeledEntity> {
        self.entities.iter().map(PlantedEntity::label).collect()
    }
}

fn layout() -> (Vec<Aabb>, Vec<PlantedEntity>) {
    let b = |min: [f64; 3], max: [f64; 3]| Aabb::from_arrays(min, max).expect("valid layout box");
    // Partition between the living room (x < 5) and the kitchen (x > 5.1),
    // with a doorway at y in [2.4, 3.6] below 2.1 m.
    let walls = vec![
        b([5.0, 0.0, 0.0], [5.1, 2.4, HEIGHT]),
        b([5.0, 3.6, 0.0], [5.1, 6.0, HEIGHT]),
        b([5.0, 2.4, 2.1], [5.1, 3.6, HEIGHT]),
    ];
    let entities = vec![
        PlantedEntity::object("couch", "sofa", [0.4, 0.2, 0.0], [2.4, 1.1, 0.9]),
        PlantedEntity::object("side table", "table", [1.1, 2.4, 0.0], [2.0, 3.1, 0.45]),
        PlantedEntity::object("television", "tv_monitor", [0.05, 3.8, 0.8], [0.25, 5.0, 1.5]),
        PlantedEntity::object("houseplant", "plant", [4.2, 5.2, 0.0], [4.7, 5.7, 1.2]),
        PlantedEntity::object("cabinet", "cabinet", [2.6, 5.5, 0.0], [3.8, 5.95, 1.8]),
        PlantedEntity::object("fridge", "fridge", [8.2, 0.1, 0.0], [8.9, 0.8, 1.9]),
        PlantedEntity::object("kitchen counter", "counter", [6.0, 0.1, 0.0], [7.6, 0.7, 0.9]),
        PlantedEntity::object("kitchen table", "table", [6.5, 3.6, 0.0], [7.8, 4.7, 0.75]),
        PlantedEntity::object("sink", "sink", [8.4, 4.8, 0.7], [8.95, 5.6, 0.95]),
        PlantedEntity {
            tag: "living room".into(),
            class: "living room".into(),
            kind: EntityKind::Region,
            aabb: b([0.0, 0.0, 0.0], [5.0, 6.0, HEIGHT]),
        },
        PlantedEntity {
            tag: "kitchen".into(),
            class: "kitchen".into(),
            kind: EntityKind::Region,
            aabb: b([5.1, 0.0, 0.0], [9.0, 6.0, HEIGHT]),
        },
    ];
    (walls, entities)
}

fn render_depth(bvh: &TriangleBvh, pose: &Pose, k: &Intrinsics) -> DepthImage {
    let mut data = Vec::with_capacity((k.width * k.height) as usize);
    let origin = Point3::from(pose.translation());
    let r = pose.rotation();
    for v in 0..k.height {
        for u in 0..k.width {
            let ray_cam = k.unproject(u as f64 + 0.5, v as f64 + 0.5);
            let scale = ray_cam.norm();
            let dir = r * (ray_cam / scale);
            // Depth is the z coordinate in the camera frame, not the ray length.
            let depth = bvh.first_hit(&origin, &dir, 50.0).map(|t| t / scale).unwrap_or(0.0);
            data.push(depth as f32);
        }
    }
    DepthImage::new(k.width, k.height, data).expect("sized to intrinsics")
}

/// Whether the entity's center projects into the crop and is not occluded.
fn visible_in_crop(bvh: &TriangleBvh, pose: &Pose, k: &Intrinsics, e: &PlantedEntity, crop: f64) -> bool {
    let center = e.aabb.center();
    let Some((u, v)) = k.project(&pose.inverse_transform_point(&center)) else { return false };
    let Some((x, y, w, h)) = crop_rect(k.width, k.height, crop) else { return false };
    if u < x as f64 || v < y as f64 || u >= (x + w) as f64 || v >= (y + h) as f64 {
        return false;
    }
    let origin = Point3::from(pose.translation());
    let dir = (center - origin).normalize();
    let Some(entry) = ray_box_entry(&origin, &dir, &e.aabb) else { return false };
    match bvh.first_hit(&origin, &dir, 50.0) {
        Some(hit) => hit >= entry - 1e-6,
        None => true,
    }
}

/// Generates the two-room apartment scene.
pub fn generate_apartment(config: &ApartmentConfig) -> SyntheticScene {
    let (walls, entities) = layout();
    let mut builder = MeshBuilder::new();
    builder.add_box(&Aabb::from_arrays([0.0; 3], [9.0, 6.0, HEIGHT]).expect("valid"), WALL_SPACING);
    for w in &walls {
        builder.add_solid(w, WALL_SPACING);
    }
    let objects: Vec<&PlantedEntity> = entities.iter().filter(|e| e.kind == EntityKind::Object).collect();
    for e in &objects {
        builder.add_solid(&e.aabb, WALL_SPACING);
    }
    let mesh = builder.build().expect("generated mesh is valid");
    let bvh = TriangleBvh::new((0..mesh.triangles().len()).map(|i| mesh.triangle(i)).collect());
    let rooms: Vec<&PlantedEntity> = entities.iter().filter(|e| e.kind == EntityKind::Region).collect();

    let w = config.image_width;
    let h = config.image_height;
    let intrinsics = Intrinsics {
        fx: 0.6 * w as f64,
        fy: 0.6 * w as f64,
        cx: w as f64 / 2.0,
        cy: h as f64 / 2.0,
        width: w,
        height: h,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut poses = Vec::new();
    for e in &objects {
        let room = rooms.iter().find(|r| r.aabb.contains_point(&e.aabb.center(), 0.0)).expect("object lies in a room");
        let target = e.aabb.center();
        let mut placed = 0;
        for _ in 0..500 {
            if placed == config.views_per_object {
                break;
            }
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let radius = rng.random_range(1.5..2.5);
            let eye = Point3::new(
                target.x + radius * angle.cos(),
                target.y + radius * angle.sin(),
                rng.random_range(1.2..1.7),
            );
            let free = room.aabb.inflated(-0.25).contains_point(&eye, 0.0)
                && !walls.iter().chain(objects.iter().map(|o| &o.aabb)).any(|b| b.inflated(0.2).contains_point(&eye, 0.0));
            if !free {
                continue;
            }
            let Ok(pose) = Pose::look_at(eye, target, Vector3::z()) else { continue };
            if !visible_in_crop(&bvh, &pose, &intrinsics, e, 10.0) {
                continue;
            }
            poses.push(pose);
            placed += 1;
        }
    }

    let crops: Vec<f64> = std::iter::once(0.0).chain(ConstructionParams::default().crop_percentages).collect();
    let mut tags: BTreeMap<(ViewpointId, u64), Vec<String>> = BTreeMap::new();
    let mut frames = Vec::with_capacity(poses.len());
    for (i, pose) in poses.iter().enumerate() {
        let id = i as ViewpointId;
        let eye = Point3::from(pose.translation());
        for &crop in &crops {
            let mut list: Vec<String> = objects
                .iter()
                .filter(|e| visible_in_crop(&bvh, pose, &intrinsics, e, crop))
                .map(|e| e.tag.clone())
                .collect();
            // Room tags describe the whole image, so every member sees them.
            list.extend(rooms.iter().filter(|r| r.aabb.contains_point(&eye, 0.0)).map(|r| r.tag.clone()));
            tags.insert((id, crop.to_bits()), list);
        }
        frames.push(Frame {
            id,
            color: ColorSource::None,
            depth: render_depth(&bvh, pose, &intrinsics),
            pose: *pose,
            intrinsics,
        });
    }

    let mut false_positives = Vec::new();
    for k in 0..config.false_positive_tags.min(frames.len()) {
        let id = (k * frames.len() / config.false_positive_tags.max(1)) as ViewpointId;
        let tag = format!("phantom {k}");
        for &crop in &crops {
            tags.entry((id, crop.to_bits())).or_default().push(tag.clone());
        }
        false_positives.push((id, tag));
    }

    SyntheticScene { mesh, entities, frames, tags: Arc::new(tags), false_positives }
}

/// A tag map of an office/lab floor built directly from viewpoints, with the
/// entities they observe. Some tags are deliberately wrong (a fire alarm
/// tagged `mailbox`, a kettle tagged `boiler`, ...) the way a real image
/// tagger errs; `class` holds the truth.
#[derive(Debug, Clone)]
pub struct LabScene {
    pub map: TagMap,
    pub entities: Vec<PlantedEntity>,
}

fn region(tag: &str, min: [f64; 3], max: [f64; 3]) -> PlantedEntity {
    PlantedEntity { kind: EntityKind::Region, ..PlantedEntity::object(tag, tag, min, max) }
}

fn lab_layout() -> Vec<PlantedEntity> {
    let o = PlantedEntity::object;
    vec![
        region("kitchen", [0.0, 0.0, 0.0], [6.0, 5.0, 2.6]),
        region("office", [6.0, 0.0, 0.0], [16.0, 5.0, 2.6]),
        region("living room", [0.0, 5.0, 0.0], [10.0, 10.0, 2.6]),
        region("hallway", [10.0, 5.0, 0.0], [14.5, 10.0, 2.6]),
        region("terrace", [16.5, 0.0, 0.0], [20.0, 10.0, 2.6]),
        o("stairwell", "stairwell", [14.5, 7.5, 0.0], [16.0, 10.0, 2.6]),
        o("microwave", "microwave", [0.3, 0.3, 0.9], [0.8, 0.7, 1.2]),
        o("coffee machine", "coffee machine", [1.0, 0.2, 0.9], [1.35, 0.5, 1.3]),
        o("soap", "soap", [1.6, 0.2, 0.9], [1.75, 0.3, 1.05]),
        o("faucet", "faucet", [2.0, 0.2, 0.9], [2.2, 0.4, 1.1]),
        o("dish washer", "dish washer", [2.6, 0.2, 0.0], [3.2, 0.8, 0.85]),
        o("boiler", "kettle", [3.6, 0.3, 0.9], [3.8, 0.5, 1.15]),
        o("fridge", "fridge", [4.5, 0.2, 0.0], [5.3, 0.9, 1.9]),
        o("paper towel", "paper towel", [0.2, 2.0, 0.9], [0.4, 2.3, 1.2]),
        o("fruit", "fruit", [2.8, 2.4, 0.9], [3.2, 2.8, 1.05]),
        o("bin", "bin", [3.4, 4.3, 0.0], [3.8, 4.7, 0.6]),
        o("light switch", "light switch", [6.05, 4.8, 1.2], [6.15, 4.9, 1.3]),
        o("blind", "blind", [6.8, 0.0, 1.0], [8.3, 0.1, 2.2]),
        o("desk", "desk", [7.5, 0.4, 0.0], [9.0, 1.2, 0.75]),
        o("charger", "charger", [8.6, 0.5, 0.75], [8.7, 0.6, 0.8]),
        o("chair", "chair", [8.0, 1.4, 0.0], [8.5, 1.9, 0.9]),
        o("barbeque grill", "metal cabinet", [10.5, 0.2, 0.0], [11.3, 0.8, 1.4]),
        o("fridge", "fridge", [15.0, 0.3, 0.0], [15.7, 1.0, 1.8]),
        o("mailbox", "fire alarm", [12.0, 4.9, 2.3], [12.2, 5.0, 2.45]),
        o("couch", "couch", [1.0, 8.5, 0.0], [3.2, 9.5, 0.85]),
        o("lamp", "lamp", [0.4, 9.3, 0.0], [0.8, 9.7, 1.6]),
        o("window", "window", [4.5, 9.95, 1.0], [6.5, 10.0, 2.2]),
        o("magazine", "magazine", [2.0, 7.0, 0.45], [2.3, 7.3, 0.5]),
        o("table tennis", "table tennis", [5.5, 6.0, 0.0], [8.2, 7.5, 0.76]),
        o("vacuum", "vacuum", [11.0, 6.0, 0.0], [11.4, 6.3, 1.1]),
        o("extinguisher", "extinguisher", [10.5, 9.7, 0.3], [10.7, 9.9, 0.9]),
        o("umbrella", "coat rack", [12.5, 9.5, 0.0], [12.9, 9.9, 1.8]),
        o("coat", "coat", [13.3, 9.6, 1.0], [13.8, 9.9, 1.7]),
    ]
}

fn mm(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Deterministic lab fixture: objects are seen from six cameras on an arc
/// facing into the floor, regions from eight cameras on their inner border
/// looking at the region center.
pub fn generate_lab() -> LabScene {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (width, height) = (640u32, 480u32);
    let intrinsics =
        Intrinsics { fx: 500.0, fy: 500.0, cx: width as f64 / 2.0, cy: height as f64 / 2.0, width, height };
    let floor_center = Point3::new(8.0, 5.0, 0.0);
    let entities = lab_layout();
    let mut map = TagMap::new(ConstructionParams::default());
    let mut next_id: ViewpointId = 0;
    for e in &entities {
        let c = e.aabb.center();
        let ext = e.aabb.extent();
        let half_diag = 0.5 * ext.norm();
        let eyes: Vec<Point3<f64>> = match e.kind {
            EntityKind::Object => {
                let to_floor = Vector3::new(floor_center.x - c.x, floor_center.y - c.y, 0.0);
                let base = to_floor.y.atan2(to_floor.x);
                let radius = 1.2 + 0.5 * ext.x.hypot(ext.y);
                (0..6)
                    .map(|i| {
                        let a = base + (i as f64 - 2.5) * 0.45 + rng.random_range(-0.05..0.05);
                        Point3::new(c.x + radius * a.cos(), c.y + radius * a.sin(), rng.random_range(1.2..1.6))
                    })
                    .collect()
            }
            EntityKind::Region => {
                let inset = |lo: f64, hi: f64, t: f64| lo + 0.4 + t * (hi - lo - 0.8);
                [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (1.0, 0.5), (1.0, 1.0), (0.5, 1.0), (0.0, 1.0), (0.0, 0.5)]
                    .iter()
                    .map(|&(u, v)| {
                        let (b, t) = (&e.aabb.min, &e.aabb.max);
                        Point3::new(inset(b.x, t.x, u), inset(b.y, t.y, v), rng.random_range(1.3..1.6))
                    })
                    .collect()
            }
        };
        let confidence = mm(rng.random_range(0.6..0.95));
        for eye in eyes {
            let eye = eye.map(mm);
            let pose = Pose::look_at(eye, c, Vector3::z()).expect("eye differs from target");
            let reach = match e.kind {
                EntityKind::Object => (c - eye).norm() + half_diag + 0.25,
                EntityKind::Region => 2.0 * (c - eye).norm(),
            };
            let viewpoint = Viewpoint { id: next_id, pose, intrinsics, far_plane_dist: mm(reach) };
            map.insert(viewpoint, [(e.tag.as_str(), confidence)]).expect("generated viewpoint is valid");
            next_id += 1;
        }
    }
    LabScene { map, entities }
}

/// Whether `aabb` lies within `max_dist` of a true instance of `class`.
pub fn near_instance(entities: &[PlantedEntity], class: &str, aabb: &Aabb, max_dist: f64) -> bool {
    entities.iter().any(|e| e.class == class && e.aabb.distance_to_box(aabb) <= max_dist)
}

/// Tag map with `n` random viewpoints whose intrinsics describe a
/// `width` × `height` camera; used to measure map size.
///
/// Poses and tags depend only on `seed`, so maps generated at different
/// image sizes differ only in their intrinsics.
pub fn random_map(n: usize, width: u32, height: u32, vocabulary: usize, tags_per_view: usize, seed: u64) -> TagMap {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut map = TagMap::default();
    let intrinsics = Intrinsics {
        fx: 0.75 * width as f64,
        fy: 0.75 * width as f64,
        cx: width as f64 / 2.0,
        cy: height as f64 / 2.0,
        width,
        height,
    };
    for id in 0..n as ViewpointId {
        let eye = Point3::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0), rng.random_range(0.5..2.0));
        let target = eye + Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.3..0.3));
        let pose = Pose::look_at(eye, target, Vector3::z()).unwrap_or_else(|_| Pose::identity());
        let far = (rng.random_range(1.0..8.0) * 1000.0_f64).round() / 1000.0;
        let tags: Vec<(String, f64)> =
            (0..tags_per_view).map(|_| (format!("tag {}", rng.random_range(0..vocabulary)), 1.0)).collect();
        map.insert(Viewpoint { id, pose, intrinsics, far_plane_dist: far }, tags).expect("generated viewpoint is valid");
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apartment_is_deterministic_and_tagged() {
        let cfg = ApartmentConfig { views_per_object: 2, ..Default::default() };
        let a = generate_apartment(&cfg);
        let b = generate_apartment(&cfg);
        assert_eq!(a.frames.len(), b.frames.len());
        assert_eq!(a.frames[0].pose, b.frames[0].pose);
        assert_eq!(a.frames.len(), 2 * 9);
        let tagger = a.tagger();
        let req = TagRequest { frame_id: 0, color: &ColorSource::None, crop_percent: 10.0 };
        let tags = crate::ingestion::Tagger::tag_image(&tagger, &req).unwrap();
        assert!(tags.iter().any(|t| t.tag == "couch"));
        assert!(a.frames[0].depth.values().iter().all(|d| *d > 0.0));
    }

    #[test]
    fn random_map_size_ignores_resolution() {
        let small = random_map(50, 400, 300, 100, 5, 1).to_json();
        let large = random_map(50, 800, 600, 100, 5, 1).to_json();
        assert_eq!(small.len(), large.len());
    }
}
