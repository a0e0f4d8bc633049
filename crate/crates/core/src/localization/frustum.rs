use nalgebra::{Point3, Vector3};

use super::LocalizationError;
use crate::geometry::Aabb;
use crate::store::Viewpoint;

/// Half-space `normal · p + offset >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    #[inline]
    pub fn signed(&self, p: &Point3<f64>) -> f64 {
        self.normal.dot(&p.coords) + self.offset
    }
}

/// Viewing frustum of a viewpoint between its near and far planes, in world
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Frustum {
    planes: [Plane; 6],
    corners: [Point3<f64>; 8],
    near: f64,
    far: f64,
}

/// Frustum of a viewpoint, using its stored far-plane distance.
pub fn make_frustum(viewpoint: &Viewpoint, near: f64) -> Result<Frustum, LocalizationError> {
    let far = viewpoint.far_plane_dist;
    if !(near > 0.0) || !(far > near) {
        return Err(LocalizationError::DegenerateFrustum { id: viewpoint.id, near, far });
    }
    let k = &viewpoint.intrinsics;
    let (w, h) = (k.width as f64, k.height as f64);
    // Camera-frame half-spaces: pixel bounds 0 <= u <= w, 0 <= v <= h and near <= z <= far.
    let camera_planes = [
        (Vector3::new(k.fx, 0.0, k.cx), 0.0),
        (Vector3::new(-k.fx, 0.0, w - k.cx), 0.0),
        (Vector3::new(0.0, k.fy, k.cy), 0.0),
        (Vector3::new(0.0, -k.fy, h - k.cy), 0.0),
        (Vector3::new(0.0, 0.0, 1.0), -near),
        (Vector3::new(0.0, 0.0, -1.0), far),
    ];
    let rotation = viewpoint.pose.rotation();
    let t = viewpoint.pose.translation();
    let planes = camera_planes.map(|(n, d)| {
        let world_normal = rotation * n;
        Plane { normal: world_normal, offset: d - world_normal.dot(&t) }
    });
    let mut corners = [Point3::origin(); 8];
    let pixel_corners = [(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)];
    for (i, depth) in [near, far].into_iter().enumerate() {
        for (j, (u, v)) in pixel_corners.iter().enumerate() {
            let ray = k.unproject(*u, *v) * depth;
            corners[i * 4 + j] = viewpoint.pose.transform_point(&Point3::from(ray));
        }
    }
    Ok(Frustum { planes, corners, near, far })
}

impl Frustum {
    #[inline]
    pub fn contains(&self, p: &Point3<f64>) -> bool {
        self.planes.iter().all(|pl| pl.signed(p) >= 0.0)
    }

    pub fn planes(&self) -> &[Plane; 6] {
        &self.planes
    }

    /// Near-plane corners followed by far-plane corners.
    pub fn corners(&self) -> &[Point3<f64>; 8] {
        &self.corners
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(self.corners.iter()).expect("eight corners")
    }

    pub fn near(&self) -> f64 {
        self.near
    }

    pub fn far(&self) -> f64 {
        self.far
    }

    /// Parameter interval `[lo, hi]` of the line `origin + s * axis_x` lying
    /// inside the frustum, or `None` when the line misses it.
    pub(crate) fn x_interval(&self, y: f64, z: f64) -> Option<(f64, f64)> {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for pl in &self.planes {
            let rest = pl.normal.y * y + pl.normal.z * z + pl.offset;
            let a = pl.normal.x;
            if a.abs() < 1e-12 {
                if rest < -1e-9 {
                    return None;
                }
                continue;
            }
            let bound = -rest / a;
            if a > 0.0 {
                lo = lo.max(bound);
            } else {
                hi = hi.min(bound);
            }
        }
        (lo <= hi).then_some((lo, hi))
    }
}
