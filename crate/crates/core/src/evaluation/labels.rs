//! Ground-truth entity labels and the class → tag mappings.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::Aabb;
use crate::store::normalize_tag;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Object,
    Region,
}

impl EntityKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Object => "object",
            Self::Region => "region",
        }
    }
}

/// One labeled instance of a class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEntity {
    pub class: String,
    pub kind: EntityKind,
    pub aabb: Aabb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_id: Option<String>,
}

/// Oriented box: `center + Σ axes[i] * s_i` with `|s_i| <= half_extents[i]`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct OrientedBox {
    pub center: [f64; 3],
    pub axes: [[f64; 3]; 3],
    pub half_extents: [f64; 3],
}

impl OrientedBox {
    /// Axis-aligned hull of the oriented box.
    pub fn hull(&self) -> Result<Aabb, EvalError> {
        let c = Vector3::from(self.center);
        let mut half = Vector3::zeros();
        for (axis, h) in self.axes.iter().zip(self.half_extents) {
            let a = Vector3::from(*axis);
            let n = a.norm();
            if !(n > 0.0) || h < 0.0 {
                return Err(EvalError::Labels("oriented box needs non-zero axes and non-negative extents".into()));
            }
            half += (a / n * h).abs();
        }
        Aabb::new(Point3::from(c - half), Point3::from(c + half)).map_err(|e| EvalError::Labels(e.to_string()))
    }
}

/// One record of a labels file. Exactly one of `aabb_min`/`aabb_max` or
/// `obb` must be given.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelRecord {
    class: String,
    kind: EntityKind,
    #[serde(default)]
    aabb_min: Option<[f64; 3]>,
    #[serde(default)]
    aabb_max: Option<[f64; 3]>,
    #[serde(default)]
    obb: Option<OrientedBox>,
    #[serde(default)]
    instance_id: Option<String>,
}

/// Naming conventions of the label source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelConvention {
    #[default]
    Plain,
    /// Matterport3D region names: "familyroom" and "lounge" become
    /// "living room", the "toilet" region becomes "bathroom".
    Mp3d,
}

/// Labels plus bookkeeping about conversions applied while loading.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LabelSet {
    pub entities: Vec<LabeledEntity>,
    /// Entities whose oriented box was replaced by its axis-aligned hull.
    pub converted_oriented: usize,
    /// Entities renamed by the label convention.
    pub relabeled: usize,
}

fn relabel(class: &str, kind: EntityKind, convention: LabelConvention) -> Option<&'static str> {
    match (convention, kind, class) {
        (LabelConvention::Mp3d, EntityKind::Region, "familyroom" | "lounge") => Some("living room"),
        (LabelConvention::Mp3d, EntityKind::Region, "toilet") => Some("bathroom"),
        _ => None,
    }
}

impl LabelSet {
    pub fn from_json(text: &str, convention: LabelConvention) -> Result<Self, EvalError> {
        let records: Vec<LabelRecord> =
            serde_json::from_str(text).map_err(|e| EvalError::Labels(format!("malformed labels: {e}")))?;
        let mut set = LabelSet::default();
        for (i, r) in records.into_iter().enumerate() {
            let aabb = match (r.aabb_min, r.aabb_max, &r.obb) {
                (Some(lo), Some(hi), None) => {
                    Aabb::from_arrays(lo, hi).map_err(|e| EvalError::Labels(format!("label {i}: {e}")))?
                }
                (None, None, Some(obb)) => {
                    set.converted_oriented += 1;
                    obb.hull()?
                }
                _ => return Err(EvalError::Labels(format!("label {i}: give either aabb_min/aabb_max or obb"))),
            };
            let class = match relabel(&r.class, r.kind, convention) {
                Some(new) => {
                    set.relabeled += 1;
                    new.to_string()
                }
                None => r.class,
            };
            set.entities.push(LabeledEntity { class, kind: r.kind, aabb, instance_id: r.instance_id });
        }
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>, convention: LabelConvention) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| EvalError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text, convention)
    }
}

/// Class name → tags whose proposals are pooled for that class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, Vec<String>>", into = "BTreeMap<String, Vec<String>>")]
pub struct ClassTagMapping {
    classes: BTreeMap<String, Vec<String>>,
}

impl TryFrom<BTreeMap<String, Vec<String>>> for ClassTagMapping {
    type Error = EvalError;

    fn try_from(raw: BTreeMap<String, Vec<String>>) -> Result<Self, EvalError> {
        let mut classes = BTreeMap::new();
        for (class, tags) in raw {
            let mut normalized: Vec<String> = tags.iter().map(|t| normalize_tag(t)).filter(|t| !t.is_empty()).collect();
            normalized.dedup();
            if normalized.is_empty() {
                return Err(EvalError::Mapping(format!("class `{class}` has no tags")));
            }
            classes.insert(class, normalized);
        }
        Ok(Self { classes })
    }
}

impl From<ClassTagMapping> for BTreeMap<String, Vec<String>> {
    fn from(m: ClassTagMapping) -> Self {
        m.classes
    }
}

const DEFAULT_OBJECT_MAPPING: &str = include_str!("../../data/object_mapping.json");
const DEFAULT_REGION_MAPPING: &str = include_str!("../../data/region_mapping.json");

impl ClassTagMapping {
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::Mapping(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| EvalError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    /// Shipped object-class mapping for Matterport3D categories.
    pub fn default_objects() -> Self {
        Self::from_json(DEFAULT_OBJECT_MAPPING).expect("shipped object mapping is valid")
    }

    /// Shipped region-class mapping for Matterport3D categories.
    pub fn default_regions() -> Self {
        Self::from_json(DEFAULT_REGION_MAPPING).expect("shipped region mapping is valid")
    }

    pub fn tags(&self, class: &str) -> Option<&[String]> {
        self.classes.get(class).map(Vec::as_slice)
    }

    pub fn classes(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.classes.iter().map(|(c, t)| (c.as_str(), t.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// Object and region mappings used together by the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Mappings {
    pub objects: ClassTagMapping,
    pub regions: ClassTagMapping,
}

impl Default for Mappings {
    fn default() -> Self {
        Self { objects: ClassTagMapping::default_objects(), regions: ClassTagMapping::default_regions() }
    }
}

impl Mappings {
    pub fn for_kind(&self, kind: EntityKind) -> &ClassTagMapping {
        match kind {
            EntityKind::Object => &self.objects,
            EntityKind::Region => &self.regions,
        }
    }
}
