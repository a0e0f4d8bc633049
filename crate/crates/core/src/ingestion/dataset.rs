//! Frame manifests: posed RGB-D frames on disk.

use std::borrow::Cow;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ColorSource, DepthImage, Frame, FrameError, FrameSource};
use crate::geometry::{Intrinsics, Pose};
use crate::store::ViewpointId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DepthFormat {
    /// 16-bit PNG in millimeters.
    PngMm,
    /// 32-bit float EXR in meters.
    ExrM,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFrame {
    pub id: ViewpointId,
    pub color_path: PathBuf,
    pub depth_path: PathBuf,
    pub depth_format: DepthFormat,
    /// Camera-to-world, row-major.
    pub pose: [f64; 16],
    pub intrinsics: Intrinsics,
}

/// A dataset manifest. Relative paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub frames: Vec<ManifestFrame>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, FrameError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| FrameError::Unreadable(format!("{}: {e}", path.display())))?;
        let mut manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| FrameError::Unreadable(format!("{}: {e}", path.display())))?;
        manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn read_depth(&self, entry: &ManifestFrame) -> Result<DepthImage, FrameError> {
        let path = self.resolve(&entry.depth_path);
        let unreadable = |e: String| FrameError::Unreadable(format!("{}: {e}", path.display()));
        let image = image::open(&path).map_err(|e| unreadable(e.to_string()))?;
        let (w, h) = (image.width(), image.height());
        let data: Vec<f32> = match entry.depth_format {
            DepthFormat::PngMm => {
                let raw = match image {
                    image::DynamicImage::ImageLuma16(buf) => buf,
                    other => return Err(unreadable(format!("expected 16-bit single-channel PNG, got {:?}", other.color()))),
                };
                raw.into_raw().into_iter().map(|mm| mm as f32 / 1000.0).collect()
            }
            DepthFormat::ExrM => image.into_rgb32f().pixels().map(|p| p.0[0]).collect(),
        };
        DepthImage::new(w, h, data)
    }
}

impl FrameSource for Manifest {
    fn len(&self) -> usize {
        self.frames.len()
    }

    fn load(&self, index: usize) -> Result<Cow<'_, Frame>, FrameError> {
        let entry = &self.frames[index];
        let pose = Pose::from_row_major(&entry.pose)
            .map_err(|e| FrameError::Unreadable(format!("frame {}: {e}", entry.id)))?;
        entry
            .intrinsics
            .validate()
            .map_err(|e| FrameError::Unreadable(format!("frame {}: {e}", entry.id)))?;
        let depth = self.read_depth(entry)?;
        Ok(Cow::Owned(Frame {
            id: entry.id,
            color: ColorSource::Path(self.resolve(&entry.color_path)),
            depth,
            pose,
            intrinsics: entry.intrinsics,
        }))
    }

    fn frame_id(&self, index: usize) -> Option<ViewpointId> {
        self.frames.get(index).map(|f| f.id)
    }
}
