//! Builds a [`TagMap`] from posed RGB-D frames.
//!
//! Each frame goes through depth statistics, the close-up depth filter and
//! the crop-ensemble tagger; surviving frames are registered as viewpoints
//! with the 80th-percentile depth as far plane.

mod dataset;
mod tagger;

use std::borrow::Cow;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Intrinsics, Pose};
use crate::params::ConstructionParams;
use crate::store::{normalize_tag, TagMap, Viewpoint, ViewpointId};

pub use dataset::{DepthFormat, Manifest, ManifestFrame};
pub use tagger::{
    crop_rect, member_file_name, FileTagger, HttpTagger, ScoredTag, ScriptedTagger, TagRequest, Tagger,
    TaggerError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrameError {
    #[error("frame has no valid depth pixels")]
    NoDepth,
    #[error("unreadable frame: {0}")]
    Unreadable(String),
}

/// Depth image in meters. Invalid pixels are `<= 0` or non-finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<Self, FrameError> {
        if data.len() != width as usize * height as usize {
            return Err(FrameError::Unreadable(format!(
                "depth buffer has {} values for a {width}x{height} image",
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, value: f32) -> Self {
        Self { width, height, data: vec![value; width as usize * height as usize] }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthStats {
    pub mean: f64,
    pub median: f64,
    pub q80: f64,
}

/// Where a frame's color image comes from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ColorSource {
    #[default]
    None,
    Path(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub id: ViewpointId,
    pub color: ColorSource,
    pub depth: DepthImage,
    pub pose: Pose,
    pub intrinsics: Intrinsics,
}

/// Linear interpolation between order statistics of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, median and 80th percentile over the valid pixels of a depth image.
pub fn compute_depth_stats(depth: &DepthImage, valid_range: [f64; 2]) -> Result<DepthStats, FrameError> {
    let [lo, hi] = valid_range;
    let mut values: Vec<f64> = depth
        .data
        .iter()
        .map(|&v| v as f64)
        .filter(|v| v.is_finite() && *v > 0.0 && *v >= lo && *v <= hi)
        .collect();
    if values.is_empty() {
        return Err(FrameError::NoDepth);
    }
    values.sort_unstable_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(DepthStats {
        mean,
        median: quantile_sorted(&values, 0.5),
        q80: quantile_sorted(&values, 0.8),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterDecision {
    Keep,
    Discard,
}

/// Close-up filter: discard when either statistic falls strictly below its threshold.
pub fn depth_filter(stats: &DepthStats, params: &ConstructionParams) -> FilterDecision {
    if stats.mean < params.depth_mean_threshold || stats.median < params.depth_median_threshold {
        FilterDecision::Discard
    } else {
        FilterDecision::Keep
    }
}

/// Tags agreed on by every ensemble member.
///
/// Member 0 sees the full image, then one member per crop percentage. A
/// surviving tag keeps its lowest confidence across members. Output is
/// sorted by tag.
pub fn crop_ensemble_tags(
    frame: &Frame,
    tagger: &dyn Tagger,
    crop_percentages: &[f64],
) -> Result<Vec<ScoredTag>, TaggerError> {
    let (w, h) = (frame.intrinsics.width, frame.intrinsics.height);
    let mut members = vec![0.0];
    members.extend_from_slice(crop_percentages);
    let mut agreed: Option<std::collections::BTreeMap<String, f64>> = None;
    for &percent in &members {
        if crop_rect(w, h, percent).is_none() {
            return Err(TaggerError::EmptyCrop { percent });
        }
        let request = TagRequest { frame_id: frame.id, color: &frame.color, crop_percent: percent };
        let mut current = std::collections::BTreeMap::new();
        for t in tagger.tag_image(&request)? {
            let key = normalize_tag(&t.tag);
            if key.is_empty() {
                continue;
            }
            let slot = current.entry(key).or_insert(t.confidence);
            *slot = f64::max(*slot, t.confidence);
        }
        agreed = Some(match agreed {
            None => current,
            Some(prev) => prev
                .into_iter()
                .filter_map(|(tag, conf)| current.get(&tag).map(|c| (tag, conf.min(*c))))
                .collect(),
        });
    }
    Ok(agreed
        .unwrap_or_default()
        .into_iter()
        .map(|(tag, confidence)| ScoredTag { tag, confidence })
        .collect())
}

/// Random-access source of frames for [`build_map`].
pub trait FrameSource: Sync {
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn load(&self, index: usize) -> Result<Cow<'_, Frame>, FrameError>;
    /// Id used in the build summary when loading fails.
    fn frame_id(&self, index: usize) -> Option<ViewpointId>;
}

impl FrameSource for [Frame] {
    fn len(&self) -> usize {
        <[Frame]>::len(self)
    }

    fn load(&self, index: usize) -> Result<Cow<'_, Frame>, FrameError> {
        Ok(Cow::Borrowed(&self[index]))
    }

    fn frame_id(&self, index: usize) -> Option<ViewpointId> {
        self.get(index).map(|f| f.id)
    }
}

impl FrameSource for Vec<Frame> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }

    fn load(&self, index: usize) -> Result<Cow<'_, Frame>, FrameError> {
        self.as_slice().load(index)
    }

    fn frame_id(&self, index: usize) -> Option<ViewpointId> {
        self.as_slice().frame_id(index)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cause", rename_all = "snake_case")]
pub enum DiscardCause {
    CloseUp { mean: f64, median: f64 },
    NoDepth,
    Unreadable { message: String },
    TaggerFailed { message: String },
    DuplicateId,
    Rejected { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardedFrame {
    /// Frame id, or `None` when the frame could not even be identified.
    pub id: Option<ViewpointId>,
    pub index: usize,
    #[serde(flatten)]
    pub cause: DiscardCause,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeptFrame {
    pub id: ViewpointId,
    pub stats: DepthStats,
    pub num_tags: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BuildSummary {
    pub total_frames: usize,
    pub kept: Vec<KeptFrame>,
    pub discarded: Vec<DiscardedFrame>,
    pub unique_tags: usize,
}

enum Outcome {
    Keep { viewpoint: Viewpoint, tags: Vec<ScoredTag>, stats: DepthStats },
    Discard(DiscardedFrame),
}

fn process_frame(
    source: &dyn FrameSource,
    index: usize,
    tagger: &dyn Tagger,
    params: &ConstructionParams,
) -> Outcome {
    let discard = |id, cause| Outcome::Discard(DiscardedFrame { id, index, cause });
    let frame = match source.load(index) {
        Ok(f) => f,
        Err(FrameError::NoDepth) => return discard(source.frame_id(index), DiscardCause::NoDepth),
        Err(e) => return discard(source.frame_id(index), DiscardCause::Unreadable { message: e.to_string() }),
    };
    let id = Some(frame.id);
    if frame.depth.width != frame.intrinsics.width || frame.depth.height != frame.intrinsics.height {
        let message = format!(
            "depth is {}x{} but intrinsics declare {}x{}",
            frame.depth.width, frame.depth.height, frame.intrinsics.width, frame.intrinsics.height
        );
        return discard(id, DiscardCause::Unreadable { message });
    }
    let stats = match compute_depth_stats(&frame.depth, params.valid_depth_range) {
        Ok(s) => s,
        Err(_) => return discard(id, DiscardCause::NoDepth),
    };
    if depth_filter(&stats, params) == FilterDecision::Discard {
        return discard(id, DiscardCause::CloseUp { mean: stats.mean, median: stats.median });
    }
    let tags = match crop_ensemble_tags(&frame, tagger, &params.crop_percentages) {
        Ok(t) => t,
        Err(e) => {
            tracing::warn!(frame = frame.id, error = %e, "tagger failed, skipping frame");
            return discard(id, DiscardCause::TaggerFailed { message: e.to_string() });
        }
    };
    Outcome::Keep {
        viewpoint: Viewpoint {
            id: frame.id,
            pose: frame.pose,
            intrinsics: frame.intrinsics,
            far_plane_dist: stats.q80,
        },
        tags,
        stats,
    }
}

/// Runs the construction pipeline over every frame of `source`.
///
/// Frames are processed by at most `jobs` workers; registration happens in
/// frame-id order, so the resulting map does not depend on scheduling.
pub fn build_map(
    source: &dyn FrameSource,
    tagger: &dyn Tagger,
    params: &ConstructionParams,
    jobs: usize,
) -> (TagMap, BuildSummary) {
    let run = || -> Vec<Outcome> {
        (0..source.len())
            .into_par_iter()
            .map(|i| process_frame(source, i, tagger, params))
            .collect()
    };
    let outcomes = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };

    let mut kept = Vec::new();
    let mut summary = BuildSummary { total_frames: source.len(), ..Default::default() };
    for outcome in outcomes {
        match outcome {
            Outcome::Keep { viewpoint, tags, stats } => kept.push((viewpoint, tags, stats)),
            Outcome::Discard(d) => summary.discarded.push(d),
        }
    }
    kept.sort_by_key(|(vp, _, _)| vp.id);

    let mut map = TagMap::new(params.clone());
    for (index, (viewpoint, tags, stats)) in kept.into_iter().enumerate() {
        let id = viewpoint.id;
        let num_tags = tags.len();
        match map.insert(viewpoint, tags.iter().map(|t| (t.tag.as_str(), t.confidence))) {
            Ok(()) => summary.kept.push(KeptFrame { id, stats, num_tags }),
            Err(crate::store::StoreError::DuplicateViewpoint(_)) => summary.discarded.push(DiscardedFrame {
                id: Some(id),
                index,
                cause: DiscardCause::DuplicateId,
            }),
            Err(e) => summary.discarded.push(DiscardedFrame {
                id: Some(id),
                index,
                cause: DiscardCause::Rejected { message: e.to_string() },
            }),
        }
    }
    summary.discarded.sort_by(|a, b| a.id.cmp(&b.id).then(a.index.cmp(&b.index)));
    summary.unique_tags = map.num_tags();
    if summary.kept.is_empty() {
        tracing::warn!(total = summary.total_frames, "no frames survived; the tag map is empty");
    }
    (map, summary)
}
