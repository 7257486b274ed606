//! Residuals and analytic Jacobians for the four factor families.
//!
//! Pose Jacobians are taken with respect to the right perturbation
//! [`Pose::retract`]; twists and points are perturbed additively. Every
//! residual here is `measurement - prediction` (or a difference that is zero
//! at consistency), so the Jacobians are derivatives of the residual itself.

use crate::camera::{project_stereo, projection_jacobian, CameraError, StereoIntrinsics, StereoObservation};
use crate::manifold::{delta_transform, exp_so3, hat, right_jacobian_so3, Pose, Twist};
use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// χ²(3 dof) 95% quantile. The Huber threshold on the whitened norm is its square root.
pub const CHI2_3DOF_95: f64 = 7.815;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FactorError {
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error("time interval must be positive, got {0}")]
    InvalidInterval(f64),
    #[error("standard deviations must be positive")]
    InvalidSigma,
}

/// Residual, per-variable Jacobians and information of one factor at one linearization point.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorEvaluation {
    pub residual: DVector<f64>,
    pub jacobians: Vec<DMatrix<f64>>,
    pub information: DMatrix<f64>,
}

impl FactorEvaluation {
    /// `rᵀ Ω r`
    pub fn squared_whitened_norm(&self) -> f64 {
        (self.residual.transpose() * &self.information * &self.residual)[(0, 0)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RobustKind {
    None,
    Huber,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustLoss {
    pub kind: RobustKind,
    /// Threshold on the whitened residual norm.
    pub delta: f64,
}

impl Default for RobustLoss {
    fn default() -> Self {
        RobustLoss { kind: RobustKind::Huber, delta: CHI2_3DOF_95.sqrt() }
    }
}

impl RobustLoss {
    pub fn none() -> Self {
        RobustLoss { kind: RobustKind::None, delta: f64::INFINITY }
    }

    pub fn huber(delta: f64) -> Self {
        assert!(delta > 0.0, "huber threshold must be positive");
        RobustLoss { kind: RobustKind::Huber, delta }
    }

    pub fn apply(&self, squared_whitened_norm: f64) -> (f64, f64) {
        huber_apply(self, squared_whitened_norm)
    }
}

/// Robust cost and IRLS weight for a squared whitened norm `s`.
///
/// Quadratic below `δ²`, linear in `√s` above: `ρ(s) = 2δ√s − δ²`, `w = δ/√s`.
pub fn huber_apply(loss: &RobustLoss, s: f64) -> (f64, f64) {
    match loss.kind {
        RobustKind::None => (s, 1.0),
        RobustKind::Huber => {
            let d2 = loss.delta * loss.delta;
            if s <= d2 {
                (s, 1.0)
            } else {
                let root = s.sqrt();
                (2.0 * loss.delta * root - d2, loss.delta / root)
            }
        }
    }
}

/// Per-unit-time noise of the motion model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionNoise {
    /// Linear-velocity random walk, m/s per √s.
    pub sigma_v: f64,
    /// Angular-velocity random walk, rad/s per √s.
    pub sigma_w: f64,
    /// Metric deviation of a point from constant-twist motion, m per √s.
    pub sigma_xyz: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        MotionNoise { sigma_v: 0.5, sigma_w: 0.1, sigma_xyz: 0.1 }
    }
}

/// Information matrix of a random-walk term over `dt`: `Σ = dt·diag(σ²)`, returned as `Σ⁻¹`.
pub fn information_for_interval(base_sigma: &[f64], dt: f64) -> Result<DMatrix<f64>, FactorError> {
    if !(dt > 0.0) {
        return Err(FactorError::InvalidInterval(dt));
    }
    if base_sigma.iter().any(|s| !(*s > 0.0)) {
        return Err(FactorError::InvalidSigma);
    }
    Ok(DMatrix::from_diagonal(&DVector::from_iterator(base_sigma.len(), base_sigma.iter().map(|s| 1.0 / (dt * s * s)))))
}

/// Isotropic pixel information for a keypoint detected at pyramid `scale` (1 = full resolution).
pub fn keypoint_information(sigma_px: f64, scale: f64) -> Matrix3<f64> {
    let s = sigma_px * scale;
    Matrix3::identity() / (s * s)
}

fn dyn3(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

/// `∂X/∂δ` for `X = T·x` under the right perturbation of `T`: `[R, −R[x]×]`.
fn point_wrt_pose(pose: &Pose, x: &Vector3<f64>) -> DMatrix<f64> {
    let r = pose.rotation.matrix();
    let mut j = DMatrix::zeros(3, 6);
    j.view_mut((0, 0), (3, 3)).copy_from(r);
    j.view_mut((0, 3), (3, 3)).copy_from(&(-r * hat(x)));
    j
}

/// Static map point observed by a stereo camera: `obs − π_s(T_CW·x_W)`.
pub fn static_reprojection(
    t_cw: &Pose,
    x_w: &Vector3<f64>,
    obs: &StereoObservation,
    intr: &StereoIntrinsics,
    information: &Matrix3<f64>,
) -> Result<FactorEvaluation, FactorError> {
    let x_c = t_cw.transform_point(x_w);
    let pred = project_stereo(&x_c, intr)?;
    let jp = projection_jacobian(&x_c, intr)?;
    let residual = obs.to_vector() - pred.to_vector();
    let jp = -dyn3(&jp);
    let j_cam = &jp * point_wrt_pose(t_cw, x_w);
    let j_point = &jp * dyn3(t_cw.rotation.matrix());
    Ok(FactorEvaluation {
        residual: DVector::from_column_slice(residual.as_slice()),
        jacobians: vec![j_cam, j_point],
        information: dyn3(information),
    })
}

/// Object point observed by a stereo camera: `obs − π_s(T_CW·T_WO·x_O)`.
/// Jacobians are ordered camera, object pose, object point.
pub fn object_reprojection(
    t_cw: &Pose,
    t_wo: &Pose,
    x_o: &Vector3<f64>,
    obs: &StereoObservation,
    intr: &StereoIntrinsics,
    information: &Matrix3<f64>,
) -> Result<FactorEvaluation, FactorError> {
    let x_w = t_wo.transform_point(x_o);
    let x_c = t_cw.transform_point(&x_w);
    let pred = project_stereo(&x_c, intr)?;
    let jp = -dyn3(&projection_jacobian(&x_c, intr)?);
    let r_cw = dyn3(t_cw.rotation.matrix());
    let residual = obs.to_vector() - pred.to_vector();
    let j_cam = &jp * point_wrt_pose(t_cw, &x_w);
    let j_obj = &jp * &r_cw * point_wrt_pose(t_wo, x_o);
    let j_point = &jp * &r_cw * dyn3(t_wo.rotation.matrix());
    Ok(FactorEvaluation {
        residual: DVector::from_column_slice(residual.as_slice()),
        jacobians: vec![j_cam, j_obj, j_point],
        information: dyn3(information),
    })
}

/// Constant-velocity prior between consecutive twists: `[v_{i+1} − v_i; w_{i+1} − w_i]`.
pub fn constant_velocity(
    twist_i: &Twist,
    twist_ip1: &Twist,
    dt: f64,
    noise: &MotionNoise,
) -> Result<FactorEvaluation, FactorError> {
    let s = noise;
    let information =
        information_for_interval(&[s.sigma_v, s.sigma_v, s.sigma_v, s.sigma_w, s.sigma_w, s.sigma_w], dt)?;
    let residual: Vector6<f64> = twist_ip1.to_vector() - twist_i.to_vector();
    Ok(FactorEvaluation {
        residual: DVector::from_column_slice(residual.as_slice()),
        jacobians: vec![-DMatrix::identity(6, 6), DMatrix::identity(6, 6)],
        information,
    })
}

/// Couples two consecutive object poses, the twist between them and one object point:
/// `T_WO^{i+1}·x_O − T_WO^{i}·ΔT(twist, dt)·x_O`.
///
/// Jacobians are ordered pose i, pose i+1, twist `[v; w]`, point.
pub fn velocity_coupling(
    t_wo_i: &Pose,
    t_wo_ip1: &Pose,
    twist_i: &Twist,
    x_o: &Vector3<f64>,
    dt: f64,
    noise: &MotionNoise,
) -> Result<FactorEvaluation, FactorError> {
    if !(dt > 0.0) {
        return Err(FactorError::InvalidInterval(dt));
    }
    let information = information_for_interval(&[noise.sigma_xyz; 3], dt)?;
    let delta = delta_transform(twist_i, dt).map_err(|_| FactorError::InvalidInterval(dt))?;
    let moved = delta.transform_point(x_o);
    let residual = t_wo_ip1.transform_point(x_o) - t_wo_i.transform_point(&moved);

    let r_i = t_wo_i.rotation.matrix();
    let dr = delta.rotation.matrix();

    let j_pose_i = -point_wrt_pose(t_wo_i, &moved);
    let j_pose_ip1 = point_wrt_pose(t_wo_ip1, x_o);

    // ΔR(w + δw) ≈ ΔR·(I + [J_r(w·dt)·δw·dt]×), so ∂(ΔR·x)/∂δw = −ΔR·[x]×·J_r(w·dt)·dt.
    let jr = right_jacobian_so3(&(twist_i.angular * dt));
    let mut j_twist = DMatrix::zeros(3, 6);
    j_twist.view_mut((0, 0), (3, 3)).copy_from(&(-r_i * dt));
    j_twist.view_mut((0, 3), (3, 3)).copy_from(&(r_i * dr * hat(x_o) * jr * dt));

    let j_point = dyn3(&(t_wo_ip1.rotation.matrix() - r_i * dr));

    Ok(FactorEvaluation {
        residual: DVector::from_column_slice(residual.as_slice()),
        jacobians: vec![j_pose_i, j_pose_ip1, j_twist, j_point],
        information,
    })
}

/// Derivative of `ΔR = Exp(w·dt)` along each angular-velocity axis `e_k`:
/// `Exp(w·dt)·[J_r(w·dt)·dt·e_k]×`.
pub fn delta_rotation_wrt_angular(angular: &Vector3<f64>, dt: f64) -> [Matrix3<f64>; 3] {
    let r = exp_so3(&(angular * dt));
    let jr = right_jacobian_so3(&(angular * dt)) * dt;
    [0, 1, 2].map(|k| r.matrix() * hat(&jr.column(k).into_owned()))
}

/// A variable value; the unit of retraction for numeric differentiation and the solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Pose(Pose),
    Twist(Twist),
    Point(Vector3<f64>),
}

impl Value {
    pub fn dof(&self) -> usize {
        match self {
            Value::Pose(_) | Value::Twist(_) => 6,
            Value::Point(_) => 3,
        }
    }

    /// Applies a tangent increment of length [`Value::dof`].
    pub fn retract(&self, delta: &[f64]) -> Value {
        assert_eq!(delta.len(), self.dof());
        match self {
            Value::Pose(p) => Value::Pose(p.retract(&Vector6::from_column_slice(delta))),
            Value::Twist(t) => Value::Twist(Twist::from_vector(&(t.to_vector() + Vector6::from_column_slice(delta)))),
            Value::Point(x) => Value::Point(x + Vector3::from_column_slice(delta)),
        }
    }

    pub fn as_pose(&self) -> Option<&Pose> {
        match self {
            Value::Pose(p) => Some(p),
            _ => None,
        }
    }

    pub fn as_twist(&self) -> Option<&Twist> {
        match self {
            Value::Twist(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_point(&self) -> Option<&Vector3<f64>> {
        match self {
            Value::Point(x) => Some(x),
            _ => None,
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Value::Pose(p) => {
                p.translation.iter().all(|x| x.is_finite()) && p.rotation.matrix().iter().all(|x| x.is_finite())
            }
            Value::Twist(t) => t.is_finite(),
            Value::Point(x) => x.iter().all(|v| v.is_finite()),
        }
    }
}

/// Step used by [`numeric_jacobians`].
pub const NUMERIC_STEP: f64 = 1e-6;

/// Central-difference Jacobians of `residual` with respect to each value, through [`Value::retract`].
pub fn numeric_jacobians<F>(values: &[Value], residual: F) -> Result<Vec<DMatrix<f64>>, FactorError>
where
    F: Fn(&[Value]) -> Result<DVector<f64>, FactorError>,
{
    let r0 = residual(values)?;
    let mut out = Vec::with_capacity(values.len());
    let mut scratch = values.to_vec();
    for (vi, value) in values.iter().enumerate() {
        let dof = value.dof();
        let mut jac = DMatrix::zeros(r0.len(), dof);
        for k in 0..dof {
            let mut delta = vec![0.0; dof];
            delta[k] = NUMERIC_STEP;
            scratch[vi] = value.retract(&delta);
            let plus = residual(&scratch)?;
            delta[k] = -NUMERIC_STEP;
            scratch[vi] = value.retract(&delta);
            let minus = residual(&scratch)?;
            jac.set_column(k, &((plus - minus) / (2.0 * NUMERIC_STEP)));
        }
        scratch[vi] = *value;
        out.push(jac);
    }
    Ok(out)
}
