//! Text-based tag maps for semantic scene mapping.
//!
//! A tag map is an inverted index from text tags (produced by an image
//! tagging model) to the posed viewpoints they were recognized in. This crate
//! builds tag maps from RGB-D frames, localizes tags coarsely in 3D by
//! frustum voting, evaluates localizations with path-length precision and
//! recall, and exposes the map as tools for a chat assistant.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod evaluation;
pub mod geometry;
pub mod grounding;
pub mod ingestion;
pub mod localization;
pub mod params;
pub mod raycast;
pub mod store;
pub mod synthetic;

pub use geometry::{Aabb, Intrinsics, Pose};
pub use params::{ConstructionParams, LocalizationParams};
pub use store::{TagMap, Viewpoint};
