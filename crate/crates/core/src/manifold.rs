//! SO(3)/SE(3) primitives.
//!
//! Rotations are stored as 3×3 matrices. Pose tangent vectors are ordered
//! `[ρ; φ]` (translation first, rotation second) and are applied on the right:
//! `T ⊕ δ = (R·Exp(φ), t + R·ρ)`. The same retraction is used by the solver,
//! by every factor Jacobian and by the finite-difference checks in the tests.

use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use std::fmt;

/// Below this angle the closed forms switch to their Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Rotation angles closer than this to π are flagged by [`log_so3_checked`].
pub const NEAR_PI: f64 = 1e-6;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ManifoldError {
    #[error("matrix is not a rotation: |RᵀR - I| = {orthogonality:.3e}, det = {det:.12}")]
    NotARotation { orthogonality: f64, det: f64 },
    #[error("negative time interval {0}")]
    NegativeInterval(f64),
}

/// Skew-symmetric matrix such that `hat(v) * u == v.cross(&u)`.
#[inline]
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`]; reads the antisymmetric part of `m`.
#[inline]
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(0.5 * (m[(2, 1)] - m[(1, 2)]), 0.5 * (m[(0, 2)] - m[(2, 0)]), 0.5 * (m[(1, 0)] - m[(0, 1)]))
}

/// An element of SO(3).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix3<f64>", into = "Matrix3<f64>")]
pub struct Rotation(Matrix3<f64>);

impl Rotation {
    pub fn identity() -> Self {
        Rotation(Matrix3::identity())
    }

    /// Validates orthonormality and a positive determinant.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, ManifoldError> {
        let orthogonality = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if orthogonality > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL || !m.iter().all(|x| x.is_finite()) {
            return Err(ManifoldError::NotARotation { orthogonality, det });
        }
        Ok(Rotation(m))
    }

    /// Wraps `m` without checking it. Callers guarantee `m ∈ SO(3)`.
    pub fn from_matrix_unchecked(m: Matrix3<f64>) -> Self {
        Rotation(m)
    }

    /// Nearest rotation in the Frobenius sense (polar decomposition).
    pub fn orthonormalized(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut d = Matrix3::identity();
        if (u * v_t).determinant() < 0.0 {
            d[(2, 2)] = -1.0;
        }
        Rotation(u * d * v_t)
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    #[inline]
    pub fn inverse(&self) -> Self {
        Rotation(self.0.transpose())
    }

    #[inline]
    pub fn compose(&self, other: &Rotation) -> Self {
        Rotation(self.0 * other.0)
    }

    #[inline]
    pub fn rotate(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.0 * x
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn angle(&self) -> f64 {
        vee(&self.0).norm().atan2((self.0.trace() - 1.0) * 0.5)
    }
}

impl From<Rotation> for Matrix3<f64> {
    fn from(r: Rotation) -> Self {
        r.0
    }
}

impl TryFrom<Matrix3<f64>> for Rotation {
    type Error = ManifoldError;
    fn try_from(m: Matrix3<f64>) -> Result<Self, Self::Error> {
        Rotation::from_matrix(m)
    }
}

/// Rodrigues' formula.
pub fn exp_so3(w: &Vector3<f64>) -> Rotation {
    let theta_sq = w.norm_squared();
    let theta = theta_sq.sqrt();
    let k = hat(w);
    if theta < SMALL_ANGLE {
        return Rotation(Matrix3::identity() + k + 0.5 * k * k);
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / theta_sq;
    Rotation(Matrix3::identity() + a * k + b * k * k)
}

/// Result of the SO(3) logarithm with a flag for the ambiguous `θ ≈ π` branch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoLog {
    pub tangent: Vector3<f64>,
    pub near_pi: bool,
}

pub fn log_so3(r: &Rotation) -> Vector3<f64> {
    log_so3_checked(r).tangent
}

/// Logarithm of a rotation. Within [`NEAR_PI`] of a half turn the axis sign is
/// ambiguous; one branch is returned and `near_pi` is set.
pub fn log_so3_checked(r: &Rotation) -> SoLog {
    let m = r.matrix();
    let cos_theta = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let axis_sin = vee(m); // sin(θ)·a
    let theta = axis_sin.norm().atan2(cos_theta);

    if theta < SMALL_ANGLE {
        return SoLog { tangent: axis_sin, near_pi: false };
    }
    if theta < std::f64::consts::PI - 1e-3 {
        return SoLog { tangent: axis_sin * (theta / theta.sin()), near_pi: false };
    }

    // Close to π sin(θ) carries no precision; read the axis from the symmetric part:
    // (R + Rᵀ)/2 - cos θ·I = (1 - cos θ)·a·aᵀ.
    let sym = (m + m.transpose()) * 0.5 - Matrix3::identity() * cos_theta;
    let scale = 1.0 - cos_theta;
    let mut best = 0;
    for i in 1..3 {
        if sym[(i, i)] > sym[(best, best)] {
            best = i;
        }
    }
    let col: Vector3<f64> = sym.column(best).into();
    let mut axis = col / (sym[(best, best)].max(0.0) * scale).sqrt();
    axis.normalize_mut();
    if axis.dot(&axis_sin) < 0.0 {
        axis = -axis;
    }
    SoLog { tangent: axis * theta, near_pi: std::f64::consts::PI - theta < NEAR_PI }
}

/// Right Jacobian of SO(3): `Exp(θ + δ) ≈ Exp(θ)·Exp(J_r(θ)·δ)`.
pub fn right_jacobian_so3(theta: &Vector3<f64>) -> Matrix3<f64> {
    let angle_sq = theta.norm_squared();
    let angle = angle_sq.sqrt();
    let k = hat(theta);
    if angle < SMALL_ANGLE {
        return Matrix3::identity() - 0.5 * k + (1.0 / 6.0) * k * k;
    }
    Matrix3::identity() - (1.0 - angle.cos()) / angle_sq * k + (angle - angle.sin()) / (angle_sq * angle) * k * k
}

/// Rigid transform in SE(3).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: Rotation,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

impl Pose {
    pub fn new(rotation: Rotation, translation: Vector3<f64>) -> Self {
        Pose { rotation, translation }
    }

    pub fn identity() -> Self {
        Pose { rotation: Rotation::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Pose { rotation: Rotation::identity(), translation: t }
    }

    /// Pose from an axis-angle rotation vector and a translation.
    pub fn from_axis_angle(axis_angle: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Pose { rotation: exp_so3(&axis_angle), translation }
    }

    #[inline]
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.rotate(&other.translation) + self.translation,
        }
    }

    #[inline]
    pub fn inverse(&self) -> Pose {
        let r_inv = self.rotation.inverse();
        Pose { translation: -(r_inv.rotate(&self.translation)), rotation: r_inv }
    }

    #[inline]
    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.rotate(x) + self.translation
    }

    /// Right-multiplicative retraction with tangent ordered `[ρ; φ]`.
    pub fn retract(&self, delta: &Vector6<f64>) -> Pose {
        let rho = delta.fixed_rows::<3>(0).into_owned();
        let phi = delta.fixed_rows::<3>(3).into_owned();
        Pose {
            rotation: self.rotation.compose(&exp_so3(&phi)),
            translation: self.translation + self.rotation.rotate(&rho),
        }
    }

    /// Inverse of [`Pose::retract`]: `self.retract(&self.local(other)) == other`.
    pub fn local(&self, other: &Pose) -> Vector6<f64> {
        let r_t = self.rotation.inverse();
        let phi = log_so3(&r_t.compose(&other.rotation));
        let rho = r_t.rotate(&(other.translation - self.translation));
        let mut out = Vector6::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&rho);
        out.fixed_rows_mut::<3>(3).copy_from(&phi);
        out
    }

    /// Axis-angle vector of the rotation block.
    pub fn axis_angle(&self) -> Vector3<f64> {
        log_so3(&self.rotation)
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let aa = self.axis_angle();
        write!(
            f,
            "Pose(t=[{:.4}, {:.4}, {:.4}], w=[{:.4}, {:.4}, {:.4}])",
            self.translation.x, self.translation.y, self.translation.z, aa.x, aa.y, aa.z
        )
    }
}

/// Linear and angular velocity of a rigid body, expressed in its own frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Twist {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
}

impl Twist {
    pub fn new(linear: Vector3<f64>, angular: Vector3<f64>) -> Self {
        Twist { linear, angular }
    }

    pub fn zero() -> Self {
        Twist::default()
    }

    /// `[v; w]`
    pub fn to_vector(&self) -> Vector6<f64> {
        let mut out = Vector6::zeros();
        out.fixed_rows_mut::<3>(0).copy_from(&self.linear);
        out.fixed_rows_mut::<3>(3).copy_from(&self.angular);
        out
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Twist { linear: v.fixed_rows::<3>(0).into_owned(), angular: v.fixed_rows::<3>(3).into_owned() }
    }

    pub fn is_finite(&self) -> bool {
        self.linear.iter().chain(self.angular.iter()).all(|x| x.is_finite())
    }
}

/// Motion undergone over `dt` seconds at a constant twist: `(Exp(w·dt), v·dt)`.
///
/// Rotation and translation are decoupled; this is not the SE(3) exponential.
pub fn delta_transform(twist: &Twist, dt: f64) -> Result<Pose, ManifoldError> {
    if dt < 0.0 {
        return Err(ManifoldError::NegativeInterval(dt));
    }
    Ok(Pose { rotation: exp_so3(&(twist.angular * dt)), translation: twist.linear * dt })
}
