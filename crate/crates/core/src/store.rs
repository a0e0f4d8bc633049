//! The tag map: unique tags, viewpoint records and the relation between them.
//!
//! Only poses, intrinsics and a far-plane depth statistic are kept per
//! viewpoint. Images never enter the map, so its size depends on the number
//! of viewpoints and tags but not on image resolution.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, Intrinsics, Pose};
use crate::params::ConstructionParams;

/// Current on-disk format version.
pub const FORMAT_VERSION: u32 = 1;

pub type ViewpointId = u64;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("viewpoint {0} is already registered")]
    DuplicateViewpoint(ViewpointId),
    #[error("invalid viewpoint {id}: {reason}")]
    InvalidViewpoint { id: ViewpointId, reason: String },
    #[error("confidence {conf} for tag `{tag}` is outside [0, 1]")]
    InvalidConfidence { tag: String, conf: f64 },
    #[error("unsupported tag map version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
    #[error("malformed tag map file: {0}")]
    Malformed(String),
    #[error("inconsistent tag map: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Lowercases, trims and collapses internal whitespace.
pub fn normalize_tag(tag: &str) -> String {
    tag.split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// A kept frame, summarized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub id: ViewpointId,
    pub pose: Pose,
    pub intrinsics: Intrinsics,
    /// 80th-percentile depth of the source frame, used as the frustum far plane.
    pub far_plane_dist: f64,
}

impl Viewpoint {
    pub fn validate(&self) -> Result<(), StoreError> {
        let bad = |reason: String| StoreError::InvalidViewpoint { id: self.id, reason };
        self.intrinsics
            .validate()
            .map_err(|e: GeometryError| bad(e.to_string()))?;
        if !(self.far_plane_dist > 0.0 && self.far_plane_dist.is_finite()) {
            return Err(bad(format!("far_plane_dist {} must be > 0", self.far_plane_dist)));
        }
        Ok(())
    }
}

/// All viewpoints in which one tag was recognized, with the tagger confidence.
#[derive(Debug, Clone, PartialEq)]
pub struct TagEntry {
    pub tag: String,
    pub views: BTreeMap<ViewpointId, f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TagMap {
    entries: HashMap<String, TagEntry>,
    viewpoints: BTreeMap<ViewpointId, Viewpoint>,
    build_params: ConstructionParams,
}

impl TagMap {
    pub fn new(build_params: ConstructionParams) -> Self {
        Self {
            entries: HashMap::new(),
            viewpoints: BTreeMap::new(),
            build_params,
        }
    }

    /// Registers a viewpoint together with the tags recognized in it.
    ///
    /// Tags are normalized; empty tags are dropped and repeated tags keep
    /// their highest confidence. Nothing is modified when an error is returned.
    pub fn insert<S: AsRef<str>>(
        &mut self,
        viewpoint: Viewpoint,
        tags: impl IntoIterator<Item = (S, f64)>,
    ) -> Result<(), StoreError> {
        if self.viewpoints.contains_key(&viewpoint.id) {
            return Err(StoreError::DuplicateViewpoint(viewpoint.id));
        }
        viewpoint.validate()?;
        let mut normalized: BTreeMap<String, f64> = BTreeMap::new();
        for (tag, conf) in tags {
            let key = normalize_tag(tag.as_ref());
            if !(0.0..=1.0).contains(&conf) {
                return Err(StoreError::InvalidConfidence { tag: key, conf });
            }
            if key.is_empty() {
                continue;
            }
            let slot = normalized.entry(key).or_insert(conf);
            *slot = slot.max(conf);
        }
        let id = viewpoint.id;
        self.viewpoints.insert(id, viewpoint);
        for (tag, conf) in normalized {
            self.entries
                .entry(tag.clone())
                .or_insert_with(|| TagEntry { tag, views: BTreeMap::new() })
                .views
                .insert(id, conf);
        }
        Ok(())
    }

    /// Viewpoints that recognized `tag`, most confident first, ties by id.
    pub fn viewpoints_for(&self, tag: &str) -> Vec<(&Viewpoint, f64)> {
        let Some(entry) = self.entries.get(&normalize_tag(tag)) else {
            return Vec::new();
        };
        let mut out: Vec<(&Viewpoint, f64)> = entry
            .views
            .iter()
            .map(|(id, conf)| (&self.viewpoints[id], *conf))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.id.cmp(&b.0.id)));
        out
    }

    pub fn unique_tags(&self) -> Vec<String> {
        let mut tags: Vec<String> = self.entries.keys().cloned().collect();
        tags.sort();
        tags
    }

    pub fn entry(&self, tag: &str) -> Option<&TagEntry> {
        self.entries.get(&normalize_tag(tag))
    }

    pub fn contains_tag(&self, tag: &str) -> bool {
        self.entries.contains_key(&normalize_tag(tag))
    }

    pub fn viewpoint(&self, id: ViewpointId) -> Option<&Viewpoint> {
        self.viewpoints.get(&id)
    }

    pub fn viewpoints(&self) -> impl Iterator<Item = &Viewpoint> {
        self.viewpoints.values()
    }

    pub fn num_viewpoints(&self) -> usize {
        self.viewpoints.len()
    }

    pub fn num_tags(&self) -> usize {
        self.entries.len()
    }

    pub fn build_params(&self) -> &ConstructionParams {
        &self.build_params
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("tag map serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, StoreError> {
        let raw: serde_json::Value =
            serde_json::from_str(text).map_err(|e| StoreError::Malformed(e.to_string()))?;
        match raw.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(found) => return Err(StoreError::VersionMismatch { found, expected: FORMAT_VERSION }),
            None => return Err(StoreError::Malformed("missing integer `version` field".into())),
        }
        let file: TagMapFile =
            serde_json::from_value(raw).map_err(|e| StoreError::Malformed(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    fn to_file(&self) -> TagMapFile {
        let mut entries: Vec<EntryRecord> = self
            .entries
            .values()
            .map(|e| EntryRecord {
                tag: e.tag.clone(),
                views: e.views.iter().map(|(&id, &conf)| ViewRecord { id, conf }).collect(),
            })
            .collect();
        entries.sort_by(|a, b| a.tag.cmp(&b.tag));
        TagMapFile {
            version: FORMAT_VERSION,
            build_params: self.build_params.clone(),
            viewpoints: self.viewpoints.values().cloned().collect(),
            entries,
        }
    }

    fn from_file(file: TagMapFile) -> Result<Self, StoreError> {
        let mut map = TagMap::new(file.build_params);
        for vp in file.viewpoints {
            vp.validate()?;
            let id = vp.id;
            if map.viewpoints.insert(id, vp).is_some() {
                return Err(StoreError::DuplicateViewpoint(id));
            }
        }
        for record in file.entries {
            let tag = normalize_tag(&record.tag);
            if tag.is_empty() || tag != record.tag {
                return Err(StoreError::Inconsistent(format!("tag `{}` is not normalized", record.tag)));
            }
            if record.views.is_empty() {
                return Err(StoreError::Inconsistent(format!("tag `{tag}` has no viewpoints")));
            }
            let mut views = BTreeMap::new();
            for v in record.views {
                if !map.viewpoints.contains_key(&v.id) {
                    return Err(StoreError::Inconsistent(format!(
                        "tag `{tag}` references unknown viewpoint {}",
                        v.id
                    )));
                }
                if !(0.0..=1.0).contains(&v.conf) {
                    return Err(StoreError::InvalidConfidence { tag: tag.clone(), conf: v.conf });
                }
                views.insert(v.id, v.conf);
            }
            if map.entries.contains_key(&tag) {
                return Err(StoreError::Inconsistent(format!("duplicate tag `{tag}`")));
            }
            map.entries.insert(tag.clone(), TagEntry { tag, views });
        }
        Ok(map)
    }
}

#[derive(Serialize, Deserialize)]
struct TagMapFile {
    version: u32,
    build_params: ConstructionParams,
    viewpoints: Vec<Viewpoint>,
    entries: Vec<EntryRecord>,
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    tag: String,
    views: Vec<ViewRecord>,
}

#[derive(Serialize, Deserialize)]
struct ViewRecord {
    id: ViewpointId,
    conf: f64,
}
