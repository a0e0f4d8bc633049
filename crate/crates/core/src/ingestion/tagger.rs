use std::fmt;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ColorSource;
use crate::store::ViewpointId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaggerError {
    #[error("crop of {percent}% leaves an empty image")]
    EmptyCrop { percent: f64 },
    #[error("frame has no color image")]
    NoImage,
    #[error("tag file {path}: {message}")]
    TagFile { path: PathBuf, message: String },
    #[error("image error: {0}")]
    Image(String),
    #[error("tagging service error: {0}")]
    Service(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTag {
    pub tag: String,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_confidence() -> f64 {
    1.0
}

impl ScoredTag {
    pub fn new(tag: impl Into<String>, confidence: f64) -> Self {
        Self { tag: tag.into(), confidence }
    }
}

/// One ensemble member's input: a frame and the border percentage to crop away.
#[derive(Debug, Clone, Copy)]
pub struct TagRequest<'a> {
    pub frame_id: ViewpointId,
    pub color: &'a ColorSource,
    /// 0 for the full image.
    pub crop_percent: f64,
}

/// A multi-label image classifier.
pub trait Tagger: Send + Sync {
    fn tag_image(&self, request: &TagRequest<'_>) -> Result<Vec<ScoredTag>, TaggerError>;
}

/// Centered crop removing `percent`% of the width from the left and right
/// borders and `percent`% of the height from the top and bottom.
/// Returns `(x, y, width, height)`, or `None` if nothing is left.
pub fn crop_rect(width: u32, height: u32, percent: f64) -> Option<(u32, u32, u32, u32)> {
    if !(0.0..50.0).contains(&percent) {
        return None;
    }
    let dx = (width as f64 * percent / 100.0).round() as u32;
    let dy = (height as f64 * percent / 100.0).round() as u32;
    let w = width.checked_sub(2 * dx)?;
    let h = height.checked_sub(2 * dy)?;
    (w > 0 && h > 0).then_some((dx, dy, w, h))
}

struct Percent(f64);

impl fmt::Display for Percent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.fract() == 0.0 {
            write!(f, "{}", self.0 as i64)
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// File name of a precomputed member output, e.g. `frame_000012_crop5.json`.
pub fn member_file_name(stem: &str, crop_percent: f64) -> String {
    format!("{stem}_crop{}.json", Percent(crop_percent))
}

/// Reads precomputed tags from `<dir>/<stem>_crop<p>.json`, where `stem` is
/// the color image file stem (or the frame id when there is no color path)
/// and `p` is 0 for the uncropped member.
#[derive(Debug, Clone)]
pub struct FileTagger {
    dir: PathBuf,
}

impl FileTagger {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, request: &TagRequest<'_>) -> PathBuf {
        let stem = match request.color {
            ColorSource::Path(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| request.frame_id.to_string()),
            ColorSource::None => request.frame_id.to_string(),
        };
        self.dir.join(member_file_name(&stem, request.crop_percent))
    }
}

impl Tagger for FileTagger {
    fn tag_image(&self, request: &TagRequest<'_>) -> Result<Vec<ScoredTag>, TaggerError> {
        let path = self.path_for(request);
        let err = |message: String| TaggerError::TagFile { path: path.clone(), message };
        let text = std::fs::read_to_string(&path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }
}

/// Posts the (cropped) image as PNG to a tagging service that answers with a
/// JSON array of `{tag, confidence}`.
pub struct HttpTagger {
    url: String,
    agent: ureq::Agent,
}

impl HttpTagger {
    pub fn new(url: impl Into<String>) -> Self {
        Self { url: url.into(), agent: ureq::Agent::new_with_defaults() }
    }

    fn encode_member(path: &Path, percent: f64) -> Result<Vec<u8>, TaggerError> {
        let image = image::open(path).map_err(|e| TaggerError::Image(format!("{}: {e}", path.display())))?;
        let (x, y, w, h) =
            crop_rect(image.width(), image.height(), percent).ok_or(TaggerError::EmptyCrop { percent })?;
        let cropped = image.crop_imm(x, y, w, h);
        let mut bytes = Vec::new();
        cropped
            .write_to(&mut Cursor::new(&mut bytes), image::ImageFormat::Png)
            .map_err(|e| TaggerError::Image(e.to_string()))?;
        Ok(bytes)
    }
}

impl Tagger for HttpTagger {
    fn tag_image(&self, request: &TagRequest<'_>) -> Result<Vec<ScoredTag>, TaggerError> {
        let ColorSource::Path(path) = request.color else {
            return Err(TaggerError::NoImage);
        };
        let body = Self::encode_member(path, request.crop_percent)?;
        let mut response = self
            .agent
            .post(&self.url)
            .header("Content-Type", "image/png")
            .send(&body[..])
            .map_err(|e| TaggerError::Service(e.to_string()))?;
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| TaggerError::Service(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| TaggerError::Service(format!("bad response: {e}")))
    }
}

type TagFn = dyn Fn(&TagRequest<'_>) -> Result<Vec<ScoredTag>, TaggerError> + Send + Sync;

/// Tagger backed by a closure; used for synthetic scenes and tests.
pub struct ScriptedTagger {
    script: Box<TagFn>,
}

impl ScriptedTagger {
    pub fn new<F>(script: F) -> Self
    where
        F: Fn(&TagRequest<'_>) -> Result<Vec<ScoredTag>, TaggerError> + Send + Sync + 'static,
    {
        Self { script: Box::new(script) }
    }
}

impl Tagger for ScriptedTagger {
    fn tag_image(&self, request: &TagRequest<'_>) -> Result<Vec<ScoredTag>, TaggerError> {
        (self.script)(request)
    }
}
