//! 3D bounding boxes: perpendicular-plane RANSAC initialization, image
//! projection, multi-view refinement against 2D detections, and overlap measures.
//!
//! World boxes follow the camera convention of the simulator: `y` points down,
//! so the bird view is the `x`–`z` plane. Overlaps in bird view and in 3D assume
//! gravity-aligned boxes (rotation about `y` only).

mod iou;
mod ransac;
mod refine;

pub use iou::{clip_convex, iou_2d, iou_3d, iou_bev, polygon_area};
pub use ransac::{fit_box_ransac, RansacConfig};
pub use refine::{refine_box, BoxView, RefineConfig, RefineResult};

use crate::camera::StereoIntrinsics;
use crate::manifold::{Pose, Rotation};
use nalgebra::{Matrix3, Vector3, Vector4};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BboxError {
    #[error("box dimensions must be positive, got {0:?}")]
    InvalidDims([f64; 3]),
    #[error("2D box needs u_min < u_max and v_min < v_max, got {0:?}")]
    InvalidRect([f64; 4]),
    #[error("{found} points, at least {required} needed")]
    TooFewPoints { found: usize, required: usize },
    #[error("{views} views, at least 3 are needed to observe a box")]
    NotObservable { views: usize },
    #[error("every box corner is behind the camera")]
    BehindCamera,
    #[error("box projection falls outside the image")]
    OutsideImage,
    #[error("no box hypothesis reached the IoU threshold (best {best_iou:.3})")]
    NoHypothesis { best_iou: f64 },
}

/// Oriented box relative to its object track frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box3D {
    /// Center and orientation in the track frame.
    pub pose: Pose,
    /// Full extents along the box axes, in meters.
    pub dims: Vector3<f64>,
}

impl Box3D {
    pub fn new(pose: Pose, dims: Vector3<f64>) -> Result<Self, BboxError> {
        if !dims.iter().all(|d| *d > 0.0 && d.is_finite()) {
            return Err(BboxError::InvalidDims([dims.x, dims.y, dims.z]));
        }
        Ok(Box3D { pose, dims })
    }

    /// The eight corners in the track frame; corner `k` takes the sign of bit `i` on axis `i`.
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        let h = self.dims * 0.5;
        std::array::from_fn(|k| {
            let local = Vector3::new(
                if k & 1 == 0 { -h.x } else { h.x },
                if k & 2 == 0 { -h.y } else { h.y },
                if k & 4 == 0 { -h.z } else { h.z },
            );
            self.pose.transform_point(&local)
        })
    }

    /// Same box with axes reordered so that dims are sorted longest first.
    pub fn canonical(&self) -> Box3D {
        self.permuted(descending(&self.dims))
    }

    /// Same box with axes reordered so that its dims rank like `reference`
    /// (the longest box axis lands where `reference` is longest, and so on).
    pub fn aligned_to(&self, reference: &Vector3<f64>) -> Box3D {
        let (mine, theirs) = (descending(&self.dims), descending(reference));
        let mut order = [0usize; 3];
        for k in 0..3 {
            order[theirs[k]] = mine[k];
        }
        self.permuted(order)
    }

    /// Axis `i` of the result is axis `order[i]` of `self`; the last axis is
    /// flipped when needed to stay right-handed.
    fn permuted(&self, order: [usize; 3]) -> Box3D {
        let r = self.pose.rotation.matrix();
        let mut m = Matrix3::from_columns(&[r.column(order[0]), r.column(order[1]), r.column(order[2])]);
        if m.determinant() < 0.0 {
            m.set_column(2, &(-m.column(2)));
        }
        Box3D {
            pose: Pose::new(Rotation::from_matrix_unchecked(m), self.pose.translation),
            dims: Vector3::new(self.dims[order[0]], self.dims[order[1]], self.dims[order[2]]),
        }
    }

    /// Places the box in the world given the track pose `T_WO`.
    pub fn in_world(&self, t_wo: &Pose) -> WorldBox {
        WorldBox { pose: t_wo.compose(&self.pose), dims: self.dims }
    }
}

fn descending(v: &Vector3<f64>) -> [usize; 3] {
    let mut order = [0usize, 1, 2];
    order.sort_by(|a, b| v[*b].partial_cmp(&v[*a]).expect("finite dims"));
    order
}

/// Largest angle between corresponding axes of two boxes, ignoring axis sign,
/// after both are canonicalized. Degrees.
pub fn orientation_error_deg(a: &Box3D, b: &Box3D) -> f64 {
    let (ra, rb) = (*a.canonical().pose.rotation.matrix(), *b.canonical().pose.rotation.matrix());
    (0..3)
        .map(|i| ra.column(i).cross(&rb.column(i)).norm().atan2(ra.column(i).dot(&rb.column(i)).abs()).to_degrees())
        .fold(0.0, f64::max)
}

/// Axis-aligned image rectangle in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Box2D {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl Box2D {
    pub fn new(u_min: f64, v_min: f64, u_max: f64, v_max: f64) -> Result<Self, BboxError> {
        if !(u_min < u_max && v_min < v_max) {
            return Err(BboxError::InvalidRect([u_min, v_min, u_max, v_max]));
        }
        Ok(Box2D { u_min, v_min, u_max, v_max })
    }

    pub fn area(&self) -> f64 {
        (self.u_max - self.u_min) * (self.v_max - self.v_min)
    }

    /// `[u_min, v_min, u_max, v_max]`
    pub fn edges(&self) -> Vector4<f64> {
        Vector4::new(self.u_min, self.v_min, self.u_max, self.v_max)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.u_min && u <= self.u_max && v >= self.v_min && v <= self.v_max
    }
}

/// Rough size of an object class, used where a dimension is not observed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassPrior {
    pub label: String,
    pub mean_dims: Vector3<f64>,
    pub std_dims: Vector3<f64>,
}

impl ClassPrior {
    pub fn new(label: impl Into<String>, mean_dims: Vector3<f64>, std_dims: Vector3<f64>) -> Result<Self, BboxError> {
        for d in [mean_dims, std_dims] {
            if !d.iter().all(|x| *x > 0.0 && x.is_finite()) {
                return Err(BboxError::InvalidDims([d.x, d.y, d.z]));
            }
        }
        Ok(ClassPrior { label: label.into(), mean_dims, std_dims })
    }

    /// Passenger car, dims ordered width, height, length.
    pub fn car() -> Self {
        ClassPrior {
            label: "car".into(),
            mean_dims: Vector3::new(1.8, 1.5, 4.2),
            std_dims: Vector3::new(0.2, 0.2, 0.5),
        }
    }
}

/// Box placed in the world frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldBox {
    pub pose: Pose,
    pub dims: Vector3<f64>,
}

impl WorldBox {
    pub fn corners(&self) -> [Vector3<f64>; 8] {
        Box3D { pose: self.pose, dims: self.dims }.corners()
    }

    /// True if `x` (world) lies inside the box.
    pub fn contains(&self, x: &Vector3<f64>) -> bool {
        let local = self.pose.inverse().transform_point(x);
        (0..3).all(|i| local[i].abs() <= 0.5 * self.dims[i])
    }
}

/// Axis-aligned image hull of a box seen by camera `T_CW`, with the track at `T_WO`.
///
/// Corners behind the near plane are replaced by the intersections of the box
/// edges with that plane, so partially visible boxes still get a tight hull.
/// The hull is clipped to the image.
pub fn project_box(b: &Box3D, t_wo: &Pose, t_cw: &Pose, intr: &StereoIntrinsics) -> Result<Box2D, BboxError> {
    let t_co = t_cw.compose(t_wo);
    let corners: Vec<Vector3<f64>> = b.corners().iter().map(|x| t_co.transform_point(x)).collect();
    let near = intr.z_min.max(1e-6);
    let mut visible: Vec<Vector3<f64>> = corners.iter().filter(|c| c.z >= near).copied().collect();
    if visible.is_empty() {
        return Err(BboxError::BehindCamera);
    }
    if visible.len() < 8 {
        for a in 0..8usize {
            for bit in 0..3 {
                let b_idx = a | (1 << bit);
                if b_idx == a {
                    continue;
                }
                let (p, q) = (corners[a], corners[b_idx]);
                if (p.z >= near) != (q.z >= near) {
                    let s = (near - p.z) / (q.z - p.z);
                    visible.push(p + (q - p) * s);
                }
            }
        }
    }
    let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in &visible {
        let u = intr.fx * c.x / c.z + intr.cx;
        let v = intr.fy * c.y / c.z + intr.cy;
        u0 = u0.min(u);
        u1 = u1.max(u);
        v0 = v0.min(v);
        v1 = v1.max(v);
    }
    let (u0, u1) = (u0.clamp(0.0, intr.width), u1.clamp(0.0, intr.width));
    let (v0, v1) = (v0.clamp(0.0, intr.height), v1.clamp(0.0, intr.height));
    Box2D::new(u0, v0, u1, v1).map_err(|_| BboxError::OutsideImage)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::exp_so3;

    fn cam(fx: f64) -> StereoIntrinsics {
        StereoIntrinsics::new(fx, fx, 320.0, 240.0, 0.5, 640.0, 480.0)
    }

    #[test]
    fn unit_cube_on_axis() {
        let b = Box3D::new(Pose::from_translation(Vector3::new(0.0, 0.0, 10.0)), Vector3::new(1.0, 1.0, 1.0)).unwrap();
        let r = project_box(&b, &Pose::identity(), &Pose::identity(), &cam(100.0)).unwrap();
        // Nearest face at z = 9.5 sets the hull: half-width 100·0.5/9.5.
        let half = 100.0 * 0.5 / 9.5;
        assert!((r.u_min - (320.0 - half)).abs() < 1e-12);
        assert!((r.u_max - (320.0 + half)).abs() < 1e-12);
        assert!(r.u_max - r.u_min > 10.0 && r.u_max - r.u_min < 11.0);
        assert!(r.contains(320.0, 240.0));
    }

    #[test]
    fn symmetric_rotation_leaves_hull() {
        let intr = cam(300.0);
        let dims = Vector3::new(2.0, 1.0, 2.0);
        let t = Vector3::new(0.5, 0.3, 12.0);
        let a = Box3D::new(Pose::from_translation(t), dims).unwrap();
        let b = Box3D::new(Pose::new(exp_so3(&Vector3::new(0.0, std::f64::consts::FRAC_PI_2, 0.0)), t), dims).unwrap();
        let ra = project_box(&a, &Pose::identity(), &Pose::identity(), &intr).unwrap();
        let rb = project_box(&b, &Pose::identity(), &Pose::identity(), &intr).unwrap();
        assert!((ra.edges() - rb.edges()).abs().max() < 1e-9);
    }

    #[test]
    fn behind_camera_is_an_error() {
        let b = Box3D::new(Pose::from_translation(Vector3::new(0.0, 0.0, -5.0)), Vector3::new(1.0, 1.0, 1.0)).unwrap();
        assert_eq!(project_box(&b, &Pose::identity(), &Pose::identity(), &cam(100.0)), Err(BboxError::BehindCamera));
    }

    #[test]
    fn straddling_near_plane_is_clipped_to_image() {
        let b = Box3D::new(Pose::from_translation(Vector3::new(0.0, 0.0, 0.5)), Vector3::new(1.0, 1.0, 2.0)).unwrap();
        let r = project_box(&b, &Pose::identity(), &Pose::identity(), &cam(100.0)).unwrap();
        assert_eq!(r.edges(), Vector4::new(0.0, 0.0, 640.0, 480.0));
    }

    #[test]
    fn canonical_orders_dims_and_stays_proper() {
        let b = Box3D::new(
            Pose::from_axis_angle(Vector3::new(0.1, 0.7, -0.2), Vector3::zeros()),
            Vector3::new(1.5, 4.0, 2.0),
        )
        .unwrap();
        let c = b.canonical();
        assert_eq!(c.dims, Vector3::new(4.0, 2.0, 1.5));
        assert!((c.pose.rotation.matrix().determinant() - 1.0).abs() < 1e-12);
        let mut cb: Vec<_> = b.corners().iter().map(|x| [x.x, x.y, x.z]).collect();
        let mut cc: Vec<_> = c.corners().iter().map(|x| [x.x, x.y, x.z]).collect();
        cb.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cc.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (x, y) in cb.iter().zip(&cc) {
            for i in 0..3 {
                assert!((x[i] - y[i]).abs() < 1e-12);
            }
        }
        assert!(orientation_error_deg(&b, &c) < 1e-9);
    }

    #[test]
    fn aligned_to_follows_reference_ranking() {
        let b = Box3D::new(
            Pose::from_axis_angle(Vector3::new(0.0, 1.2, 0.3), Vector3::zeros()),
            Vector3::new(1.5, 4.2, 1.8),
        )
        .unwrap();
        let a = b.aligned_to(&Vector3::new(1.8, 1.5, 4.2));
        assert_eq!(a.dims, Vector3::new(1.8, 1.5, 4.2));
        assert!((a.pose.rotation.matrix().determinant() - 1.0).abs() < 1e-12);
        assert!(orientation_error_deg(&a, &b) < 1e-9);
        assert_eq!(a.aligned_to(&Vector3::new(1.8, 1.5, 4.2)), a);
    }

    #[test]
    fn invalid_boxes_rejected() {
        assert!(Box3D::new(Pose::identity(), Vector3::new(1.0, 0.0, 1.0)).is_err());
        assert!(Box2D::new(1.0, 0.0, 1.0, 2.0).is_err());
    }
}
