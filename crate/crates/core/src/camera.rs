//! Rectified stereo camera model.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

/// Default minimum depth accepted by [`project_stereo`], in meters.
pub const DEFAULT_Z_MIN: f64 = 1e-3;
/// Default minimum disparity accepted by [`backproject`], in pixels.
pub const DEFAULT_DISPARITY_MIN: f64 = 0.1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CameraError {
    #[error("point is behind the camera (z = {z}, minimum {z_min})")]
    BehindCamera { z: f64, z_min: f64 },
    #[error("disparity {disparity} px is below the minimum {d_min} px")]
    FarPoint { disparity: f64, d_min: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StereoIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Horizontal baseline in meters.
    pub baseline: f64,
    pub width: f64,
    pub height: f64,
    #[serde(default = "default_z_min")]
    pub z_min: f64,
    #[serde(default = "default_d_min")]
    pub d_min: f64,
}

fn default_z_min() -> f64 {
    DEFAULT_Z_MIN
}

fn default_d_min() -> f64 {
    DEFAULT_DISPARITY_MIN
}

impl Default for StereoIntrinsics {
    /// KITTI-like rectified stereo rig.
    fn default() -> Self {
        StereoIntrinsics::new(718.856, 718.856, 607.1928, 185.2157, 0.5371, 1241.0, 376.0)
    }
}

impl StereoIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, baseline: f64, width: f64, height: f64) -> Self {
        StereoIntrinsics { fx, fy, cx, cy, baseline, width, height, z_min: DEFAULT_Z_MIN, d_min: DEFAULT_DISPARITY_MIN }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CameraError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(CameraError::InvalidIntrinsics("image size must be positive"));
        }
        if !(self.baseline >= 0.0) {
            return Err(CameraError::InvalidIntrinsics("baseline must be non-negative"));
        }
        if !(self.z_min > 0.0 && self.d_min >= 0.0) {
            return Err(CameraError::InvalidIntrinsics("z_min must be positive and d_min non-negative"));
        }
        Ok(())
    }

    /// `fx · b`, the disparity-depth product.
    #[inline]
    pub fn bf(&self) -> f64 {
        self.fx * self.baseline
    }

    /// True if the left and right pixels both fall inside the image.
    pub fn in_image(&self, obs: &StereoObservation) -> bool {
        let inside = |u: f64| (0.0..self.width).contains(&u);
        inside(obs.u_left) && inside(obs.u_right) && (0.0..self.height).contains(&obs.v_left)
    }
}

/// Pixel triple `(u_L, v_L, u_R)` from a rectified stereo pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StereoObservation {
    pub u_left: f64,
    pub v_left: f64,
    pub u_right: f64,
}

impl StereoObservation {
    pub fn new(u_left: f64, v_left: f64, u_right: f64) -> Self {
        StereoObservation { u_left, v_left, u_right }
    }

    pub fn to_vector(&self) -> Vector3<f64> {
        Vector3::new(self.u_left, self.v_left, self.u_right)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        StereoObservation { u_left: v.x, v_left: v.y, u_right: v.z }
    }

    #[inline]
    pub fn disparity(&self) -> f64 {
        self.u_left - self.u_right
    }
}

pub fn project_stereo(x_c: &Vector3<f64>, intr: &StereoIntrinsics) -> Result<StereoObservation, CameraError> {
    let z = x_c.z;
    if !(z > intr.z_min) {
        return Err(CameraError::BehindCamera { z, z_min: intr.z_min });
    }
    let inv_z = 1.0 / z;
    Ok(StereoObservation {
        u_left: intr.fx * x_c.x * inv_z + intr.cx,
        v_left: intr.fy * x_c.y * inv_z + intr.cy,
        u_right: intr.fx * (x_c.x - intr.baseline) * inv_z + intr.cx,
    })
}

/// `∂π_s/∂X_C`, rows ordered `u_L, v_L, u_R`.
pub fn projection_jacobian(x_c: &Vector3<f64>, intr: &StereoIntrinsics) -> Result<Matrix3<f64>, CameraError> {
    let z = x_c.z;
    if !(z > intr.z_min) {
        return Err(CameraError::BehindCamera { z, z_min: intr.z_min });
    }
    let inv_z = 1.0 / z;
    let inv_z2 = inv_z * inv_z;
    Ok(Matrix3::new(
        intr.fx * inv_z,
        0.0,
        -intr.fx * x_c.x * inv_z2,
        0.0,
        intr.fy * inv_z,
        -intr.fy * x_c.y * inv_z2,
        intr.fx * inv_z,
        0.0,
        -intr.fx * (x_c.x - intr.baseline) * inv_z2,
    ))
}

/// Triangulates a stereo observation into the left camera frame.
pub fn backproject(obs: &StereoObservation, intr: &StereoIntrinsics) -> Result<Vector3<f64>, CameraError> {
    let disparity = obs.disparity();
    if !(disparity > intr.d_min) {
        return Err(CameraError::FarPoint { disparity, d_min: intr.d_min });
    }
    let z = intr.bf() / disparity;
    Ok(Vector3::new((obs.u_left - intr.cx) * z / intr.fx, (obs.v_left - intr.cy) * z / intr.fy, z))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> StereoIntrinsics {
        StereoIntrinsics::new(100.0, 100.0, 50.0, 50.0, 0.5, 200.0, 200.0)
    }

    #[test]
    fn worked_projection() {
        let obs = project_stereo(&Vector3::new(1.0, 2.0, 4.0), &toy()).unwrap();
        assert_eq!(obs, StereoObservation::new(75.0, 100.0, 62.5));
        let x = backproject(&obs, &toy()).unwrap();
        assert!((x - Vector3::new(1.0, 2.0, 4.0)).norm() < 1e-12);
    }

    #[test]
    fn optical_axis_zero_baseline() {
        let mut intr = toy();
        intr.baseline = 0.0;
        let obs = project_stereo(&Vector3::new(0.0, 0.0, 1.0), &intr).unwrap();
        assert_eq!(obs, StereoObservation::new(50.0, 50.0, 50.0));
        let j = projection_jacobian(&Vector3::new(0.0, 0.0, 1.0), &intr).unwrap();
        assert_eq!(j[(0, 1)], 0.0);
    }

    #[test]
    fn degenerate_geometry() {
        assert!(matches!(project_stereo(&Vector3::new(0.0, 0.0, -1.0), &toy()), Err(CameraError::BehindCamera { .. })));
        assert!(matches!(
            backproject(&StereoObservation::new(10.0, 10.0, 10.0), &toy()),
            Err(CameraError::FarPoint { .. })
        ));
    }

    #[test]
    fn validate_intrinsics() {
        assert!(toy().validate().is_ok());
        let mut bad = toy();
        bad.fx = 0.0;
        assert!(bad.validate().is_err());
    }
}
