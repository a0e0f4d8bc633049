//! Construction and localization parameters with their reference defaults.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid parameter `{name}`: {reason}")]
pub struct ParamError {
    pub name: &'static str,
    pub reason: String,
}

fn invalid(name: &'static str, reason: impl Into<String>) -> ParamError {
    ParamError { name, reason: reason.into() }
}

/// Parameters of the map construction pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructionParams {
    /// Frames whose mean valid depth is below this are close-ups (meters).
    pub depth_mean_threshold: f64,
    /// Frames whose median valid depth is below this are close-ups (meters).
    pub depth_median_threshold: f64,
    /// Border crop percentages of the ensemble members besides the full image.
    pub crop_percentages: Vec<f64>,
    /// Depth values outside `[min, max]` meters are treated as invalid.
    pub valid_depth_range: [f64; 2],
}

impl Default for ConstructionParams {
    fn default() -> Self {
        Self {
            depth_mean_threshold: 0.6,
            depth_median_threshold: 0.6,
            crop_percentages: vec![5.0, 10.0],
            valid_depth_range: [0.0, 100.0],
        }
    }
}

impl ConstructionParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.depth_mean_threshold > 0.0) {
            return Err(invalid("depth_mean_threshold", "must be > 0"));
        }
        if !(self.depth_median_threshold > 0.0) {
            return Err(invalid("depth_median_threshold", "must be > 0"));
        }
        if let Some(p) = self.crop_percentages.iter().find(|p| !(**p > 0.0 && **p < 50.0)) {
            return Err(invalid("crop_percentages", format!("{p} is outside (0, 50)")));
        }
        let [lo, hi] = self.valid_depth_range;
        if !(lo >= 0.0 && hi > lo) {
            return Err(invalid("valid_depth_range", "expected 0 <= min < max"));
        }
        Ok(())
    }
}

/// Parameters of coarse localization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationParams {
    pub voxel_size: f64,
    pub dbscan_eps: f64,
    pub dbscan_min_points: usize,
    /// Vote thresholds relative to the tag's maximum voxel vote.
    pub normalized_vote_thresholds: Vec<f64>,
    pub near_plane: f64,
    /// Optional cap on the number of viewpoints used per tag (most confident first).
    pub max_views: Option<usize>,
}

impl Default for LocalizationParams {
    fn default() -> Self {
        Self {
            voxel_size: 0.2,
            dbscan_eps: 0.4,
            dbscan_min_points: 5,
            normalized_vote_thresholds: vec![0.0, 0.25, 0.5, 0.75],
            near_plane: 0.2,
            max_views: None,
        }
    }
}

impl LocalizationParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(invalid("voxel_size", "must be > 0"));
        }
        if !(self.dbscan_eps > 0.0 && self.dbscan_eps.is_finite()) {
            return Err(invalid("dbscan_eps", "must be > 0"));
        }
        if self.dbscan_min_points == 0 {
            return Err(invalid("dbscan_min_points", "must be >= 1"));
        }
        if !(self.near_plane > 0.0 && self.near_plane.is_finite()) {
            return Err(invalid("near_plane", "must be > 0"));
        }
        let t = &self.normalized_vote_thresholds;
        if t.is_empty() {
            return Err(invalid("normalized_vote_thresholds", "must not be empty"));
        }
        if t.iter().any(|v| !(0.0..1.0).contains(v)) {
            return Err(invalid("normalized_vote_thresholds", "values must lie in [0, 1)"));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("normalized_vote_thresholds", "must be strictly increasing"));
        }
        if self.max_views == Some(0) {
            return Err(invalid("max_views", "must be >= 1 when set"));
        }
        Ok(())
    }
}
