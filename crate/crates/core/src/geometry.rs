//! Small geometric primitives shared by the map, localization and evaluation layers.

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Tolerance used when checking that a pose rotation is orthonormal.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("pose contains non-finite values")]
    NonFinitePose,
    #[error("pose bottom row must be [0, 0, 0, 1]")]
    NotRigid,
    #[error("pose rotation is not orthonormal with determinant +1")]
    NotOrthonormal,
    #[error("invalid intrinsics: {0}")]
    Intrinsics(String),
    #[error("invalid box: {0}")]
    Aabb(String),
}

/// Rigid camera-to-world transform, kept as the exact 4x4 matrix it was
/// created from so that serialization is bit-stable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    matrix: Matrix4<f64>,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix4::identity(),
        }
    }

    /// Validates and wraps a 4x4 homogeneous transform.
    pub fn from_matrix(matrix: Matrix4<f64>) -> Result<Self, GeometryError> {
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinitePose);
        }
        let bottom = matrix.row(3);
        if bottom[0] != 0.0 || bottom[1] != 0.0 || bottom[2] != 0.0 || bottom[3] != 1.0 {
            return Err(GeometryError::NotRigid);
        }
        let r: Matrix3<f64> = matrix.fixed_view::<3, 3>(0, 0).into_owned();
        let gram = r.transpose() * r;
        let off = (gram - Matrix3::identity()).abs().max();
        if off > ROTATION_TOLERANCE || (r.determinant() - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(GeometryError::NotOrthonormal);
        }
        Ok(Self { matrix })
    }

    pub fn from_row_major(values: &[f64; 16]) -> Result<Self, GeometryError> {
        Self::from_matrix(Matrix4::from_row_slice(values))
    }

    /// Builds a pose from a rotation matrix and a camera position.
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&translation);
        Self::from_matrix(m)
    }

    /// Camera at `eye` looking at `target`, using the optical convention
    /// (+z forward, +x right, +y down). `up` is the world up direction.
    pub fn look_at(eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>) -> Result<Self, GeometryError> {
        let forward = (target - eye).normalize();
        let mut right = forward.cross(&up);
        if right.norm() < 1e-9 {
            right = forward.cross(&Vector3::x());
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rotation = Matrix3::from_columns(&[right, down, forward]);
        Self::from_parts(rotation, eye.coords)
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = self.matrix[(r, c)];
            }
        }
        out
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.matrix
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.matrix.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.matrix.fixed_view::<3, 1>(0, 3).into_owned()
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation() * p.coords + self.translation())
    }

    /// World point expressed in the camera frame.
    pub fn inverse_transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation().transpose() * (p.coords - self.translation()))
    }
}

impl Serialize for Pose {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_row_major().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = <[f64; 16]>::deserialize(deserializer)?;
        Pose::from_row_major(&values).map_err(serde::de::Error::custom)
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = [self.fx, self.fy, self.cx, self.cy].iter().all(|v| v.is_finite());
        if !finite {
            return Err(GeometryError::Intrinsics("non-finite value".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(GeometryError::Intrinsics("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::Intrinsics("image size must be positive".into()));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return Err(GeometryError::Intrinsics("principal point outside the image".into()));
        }
        Ok(())
    }

    /// Projects a camera-frame point to pixel coordinates. `None` behind the camera.
    pub fn project(&self, p: &Point3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Camera-frame ray direction (z = 1) through pixel coordinates `(u, v)`.
    pub fn unproject(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Intrinsics of the same camera after resampling the image by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: self.cx * factor,
            cy: self.cy * factor,
            width: (self.width as f64 * factor).round() as u32,
            height: (self.height as f64 * factor).round() as u32,
        }
    }
}

/// Axis-aligned bounding box in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Result<Self, GeometryError> {
        if min.iter().chain(max.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::Aabb("non-finite corner".into()));
        }
        if (0..3).any(|i| min[i] > max[i]) {
            return Err(GeometryError::Aabb("min exceeds max".into()));
        }
        Ok(Self { min, max })
    }

    pub fn from_arrays(min: [f64; 3], max: [f64; 3]) -> Result<Self, GeometryError> {
        Self::new(Point3::from(min), Point3::from(max))
    }

    /// Smallest box holding every point. `None` for an empty iterator.
    pub fn from_points<'a, I: IntoIterator<Item = &'a Point3<f64>>>(points: I) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = *iter.next()?;
        let (mut min, mut max) = (first, first);
        for p in iter {
            for i in 0..3 {
                min[i] = min[i].min(p[i]);
                max[i] = max[i].max(p[i]);
            }
        }
        Some(Self { min, max })
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extent();
        e.x * e.y * e.z
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn inflated(&self, delta: f64) -> Aabb {
        let d = Vector3::repeat(delta);
        Aabb {
            min: self.min - d,
            max: self.max + d,
        }
    }

    pub fn contains_point(&self, p: &Point3<f64>, tol: f64) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] - tol && p[i] <= self.max[i] + tol)
    }

    /// `other ⊆ self` up to `tol` meters.
    pub fn contains_box(&self, other: &Aabb, tol: f64) -> bool {
        (0..3).all(|i| other.min[i] >= self.min[i] - tol && other.max[i] <= self.max[i] + tol)
    }

    pub fn is_degenerate(&self) -> bool {
        (0..3).any(|i| self.max[i] <= self.min[i])
    }

    pub fn closest_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::new(
            p.x.clamp(self.min.x, self.max.x),
            p.y.clamp(self.min.y, self.max.y),
            p.z.clamp(self.min.z, self.max.z),
        )
    }

    /// Euclidean distance from a point to the box, zero inside.
    pub fn distance_to_point(&self, p: &Point3<f64>) -> f64 {
        (self.closest_point(p) - p).norm()
    }

    /// Minimum Euclidean distance between two boxes, zero when they touch or overlap.
    pub fn distance_to_box(&self, other: &Aabb) -> f64 {
        let gap = Vector3::from_fn(|i, _| {
            (self.min[i] - other.max[i]).max(other.min[i] - self.max[i]).max(0.0)
        });
        gap.norm()
    }

    pub fn corners(&self) -> [Point3<f64>; 8] {
        let (a, b) = (self.min, self.max);
        [
            Point3::new(a.x, a.y, a.z),
            Point3::new(b.x, a.y, a.z),
            Point3::new(a.x, b.y, a.z),
            Point3::new(b.x, b.y, a.z),
            Point3::new(a.x, a.y, b.z),
            Point3::new(b.x, a.y, b.z),
            Point3::new(a.x, b.y, b.z),
            Point3::new(b.x, b.y, b.z),
        ]
    }
}
