//! The factor-graph problem: variables, typed factors, frame timestamps and cost.

pub(crate) mod text;
mod window;

pub use text::ParseError;
pub use window::{build_local_window, WindowTrigger, DEFAULT_WINDOW_SECONDS};

use crate::camera::{StereoIntrinsics, StereoObservation};
use crate::factors::{
    self, numeric_jacobians, FactorError, FactorEvaluation, MotionNoise, RobustLoss, Value, CHI2_3DOF_95,
};
use crate::manifold::{Pose, Twist};
use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// χ²(6 dof) 95% quantile, used for the constant-velocity prior's robust threshold.
pub const CHI2_6DOF_95: f64 = 12.592;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GraphError {
    #[error("factor references missing variable {0}")]
    MissingVariable(VariableKey),
    #[error("variable {key} holds a {found} value, expected {expected}")]
    WrongValueKind { key: VariableKey, expected: &'static str, found: &'static str },
    #[error("duplicate variable {0}")]
    DuplicateVariable(VariableKey),
    #[error("frame {frame} has no timestamp")]
    MissingTimestamp { frame: u32 },
    #[error("timestamps must increase with frame index (frame {frame} at {time} s)")]
    NonMonotonicTimestamp { frame: u32, time: f64 },
    #[error("object pose {0} has a successor but no twist")]
    MissingTwist(VariableKey),
    #[error("local window is empty")]
    EmptyWindow,
    #[error(transparent)]
    Factor(#[from] FactorError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariableKind {
    CameraPose,
    ObjectPose,
    ObjectTwist,
    MapPoint,
    ObjectPoint,
}

impl VariableKind {
    pub fn dof(self) -> usize {
        match self {
            VariableKind::CameraPose | VariableKind::ObjectPose | VariableKind::ObjectTwist => 6,
            VariableKind::MapPoint | VariableKind::ObjectPoint => 3,
        }
    }
}

/// Identifies one optimization variable.
///
/// Frames are indexed by `i`, object tracks by `k`, map points by `l` and object points by `j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariableKey {
    Camera { frame: u32 },
    ObjectPose { track: u32, frame: u32 },
    ObjectTwist { track: u32, frame: u32 },
    MapPoint { point: u32 },
    ObjectPoint { track: u32, point: u32 },
}

impl VariableKey {
    pub fn kind(&self) -> VariableKind {
        match self {
            VariableKey::Camera { .. } => VariableKind::CameraPose,
            VariableKey::ObjectPose { .. } => VariableKind::ObjectPose,
            VariableKey::ObjectTwist { .. } => VariableKind::ObjectTwist,
            VariableKey::MapPoint { .. } => VariableKind::MapPoint,
            VariableKey::ObjectPoint { .. } => VariableKind::ObjectPoint,
        }
    }

    pub fn frame(&self) -> Option<u32> {
        match *self {
            VariableKey::Camera { frame }
            | VariableKey::ObjectPose { frame, .. }
            | VariableKey::ObjectTwist { frame, .. } => Some(frame),
            _ => None,
        }
    }

    pub fn track(&self) -> Option<u32> {
        match *self {
            VariableKey::ObjectPose { track, .. }
            | VariableKey::ObjectTwist { track, .. }
            | VariableKey::ObjectPoint { track, .. } => Some(track),
            _ => None,
        }
    }
}

impl std::fmt::Display for VariableKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VariableKey::Camera { frame } => write!(f, "camera(i={frame})"),
            VariableKey::ObjectPose { track, frame } => write!(f, "object_pose(k={track}, i={frame})"),
            VariableKey::ObjectTwist { track, frame } => write!(f, "object_twist(k={track}, i={frame})"),
            VariableKey::MapPoint { point } => write!(f, "map_point(l={point})"),
            VariableKey::ObjectPoint { track, point } => write!(f, "object_point(k={track}, j={point})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub value: Value,
    pub fixed: bool,
}

/// A typed factor. Motion factors take their interval from the problem's timestamps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Factor {
    StaticReprojection { frame: u32, point: u32, obs: StereoObservation, information: Matrix3<f64> },
    ObjectReprojection { frame: u32, track: u32, point: u32, obs: StereoObservation, information: Matrix3<f64> },
    ConstantVelocity { track: u32, from: u32, to: u32 },
    VelocityCoupling { track: u32, from: u32, to: u32, point: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FactorFamily {
    StaticReprojection,
    ObjectReprojection,
    ConstantVelocity,
    VelocityCoupling,
}

impl Factor {
    pub fn family(&self) -> FactorFamily {
        match self {
            Factor::StaticReprojection { .. } => FactorFamily::StaticReprojection,
            Factor::ObjectReprojection { .. } => FactorFamily::ObjectReprojection,
            Factor::ConstantVelocity { .. } => FactorFamily::ConstantVelocity,
            Factor::VelocityCoupling { .. } => FactorFamily::VelocityCoupling,
        }
    }

    /// Connected variables, in the order of the evaluation's Jacobians.
    pub fn keys(&self) -> Vec<VariableKey> {
        match *self {
            Factor::StaticReprojection { frame, point, .. } => {
                vec![VariableKey::Camera { frame }, VariableKey::MapPoint { point }]
            }
            Factor::ObjectReprojection { frame, track, point, .. } => vec![
                VariableKey::Camera { frame },
                VariableKey::ObjectPose { track, frame },
                VariableKey::ObjectPoint { track, point },
            ],
            Factor::ConstantVelocity { track, from, to } => {
                vec![VariableKey::ObjectTwist { track, frame: from }, VariableKey::ObjectTwist { track, frame: to }]
            }
            Factor::VelocityCoupling { track, from, to, point } => vec![
                VariableKey::ObjectPose { track, frame: from },
                VariableKey::ObjectPose { track, frame: to },
                VariableKey::ObjectTwist { track, frame: from },
                VariableKey::ObjectPoint { track, point },
            ],
        }
    }

    pub fn residual_dim(&self) -> usize {
        match self {
            Factor::ConstantVelocity { .. } => 6,
            _ => 3,
        }
    }

    fn interval(&self, p: &Problem) -> Result<Option<f64>, GraphError> {
        match *self {
            Factor::ConstantVelocity { from, to, .. } | Factor::VelocityCoupling { from, to, .. } => {
                Ok(Some(p.timestamp(to)? - p.timestamp(from)?))
            }
            _ => Ok(None),
        }
    }

    fn evaluate_values(&self, p: &Problem, values: &[Value], dt: Option<f64>) -> Result<FactorEvaluation, FactorError> {
        let intr = &p.intrinsics;
        let noise = &p.motion_noise;
        let pose = |i: usize| values[i].as_pose().expect("pose value");
        let twist = |i: usize| values[i].as_twist().expect("twist value");
        let point = |i: usize| values[i].as_point().expect("point value");
        match self {
            Factor::StaticReprojection { obs, information, .. } => {
                factors::static_reprojection(pose(0), point(1), obs, intr, information)
            }
            Factor::ObjectReprojection { obs, information, .. } => {
                factors::object_reprojection(pose(0), pose(1), point(2), obs, intr, information)
            }
            Factor::ConstantVelocity { .. } => {
                factors::constant_velocity(twist(0), twist(1), dt.unwrap_or(f64::NAN), noise)
            }
            Factor::VelocityCoupling { .. } => {
                factors::velocity_coupling(pose(0), pose(1), twist(2), point(3), dt.unwrap_or(f64::NAN), noise)
            }
        }
    }

    /// Residual, Jacobians and information at the problem's current values.
    pub fn linearize(&self, p: &Problem, mode: JacobianMode) -> Result<FactorEvaluation, GraphError> {
        let keys = self.keys();
        let mut values = Vec::with_capacity(keys.len());
        for (slot, key) in keys.iter().enumerate() {
            let v = p.value(key)?;
            let expected = expected_value_kind(self, slot);
            if value_kind_name(&v) != expected {
                return Err(GraphError::WrongValueKind { key: *key, expected, found: value_kind_name(&v) });
            }
            values.push(v);
        }
        let dt = self.interval(p)?;
        let mut eval = self.evaluate_values(p, &values, dt)?;
        if mode == JacobianMode::Numeric {
            eval.jacobians = numeric_jacobians(&values, |vals| self.evaluate_values(p, vals, dt).map(|e| e.residual))?;
        }
        Ok(eval)
    }

    pub fn robust_loss<'a>(&self, losses: &'a LossConfig) -> &'a RobustLoss {
        match self {
            Factor::StaticReprojection { .. } | Factor::ObjectReprojection { .. } => &losses.reprojection,
            Factor::ConstantVelocity { .. } => &losses.constant_velocity,
            Factor::VelocityCoupling { .. } => &losses.velocity_coupling,
        }
    }
}

fn value_kind_name(v: &Value) -> &'static str {
    match v {
        Value::Pose(_) => "pose",
        Value::Twist(_) => "twist",
        Value::Point(_) => "point",
    }
}

fn expected_value_kind(f: &Factor, slot: usize) -> &'static str {
    match (f, slot) {
        (Factor::StaticReprojection { .. }, 0) => "pose",
        (Factor::StaticReprojection { .. }, _) => "point",
        (Factor::ObjectReprojection { .. }, 0 | 1) => "pose",
        (Factor::ObjectReprojection { .. }, _) => "point",
        (Factor::ConstantVelocity { .. }, _) => "twist",
        (Factor::VelocityCoupling { .. }, 0 | 1) => "pose",
        (Factor::VelocityCoupling { .. }, 2) => "twist",
        (Factor::VelocityCoupling { .. }, _) => "point",
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JacobianMode {
    #[default]
    Analytic,
    /// Central differences through the solver's retraction. Diagnostic only.
    Numeric,
}

/// Robust loss per factor family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub reprojection: RobustLoss,
    pub constant_velocity: RobustLoss,
    pub velocity_coupling: RobustLoss,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            reprojection: RobustLoss::huber(CHI2_3DOF_95.sqrt()),
            constant_velocity: RobustLoss::huber(CHI2_6DOF_95.sqrt()),
            velocity_coupling: RobustLoss::huber(CHI2_3DOF_95.sqrt()),
        }
    }
}

impl LossConfig {
    pub fn none() -> Self {
        LossConfig {
            reprojection: RobustLoss::none(),
            constant_velocity: RobustLoss::none(),
            velocity_coupling: RobustLoss::none(),
        }
    }

    pub fn uniform(loss: RobustLoss) -> Self {
        LossConfig { reprojection: loss, constant_velocity: loss, velocity_coupling: loss }
    }
}

/// The bundle-adjustment problem.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub intrinsics: StereoIntrinsics,
    pub motion_noise: MotionNoise,
    pub losses: LossConfig,
    timestamps: BTreeMap<u32, f64>,
    variables: BTreeMap<VariableKey, Variable>,
    factors: Vec<Factor>,
}

/// Robustified cost with bookkeeping for skipped factors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CostReport {
    pub cost: f64,
    /// Factors skipped because their point fell behind a camera.
    pub invalid_factors: usize,
    /// Residual rows of the factors that contributed.
    pub residual_dims: usize,
}

impl Problem {
    pub fn new(intrinsics: StereoIntrinsics) -> Self {
        Problem {
            intrinsics,
            motion_noise: MotionNoise::default(),
            losses: LossConfig::default(),
            timestamps: BTreeMap::new(),
            variables: BTreeMap::new(),
            factors: Vec::new(),
        }
    }

    /// Same configuration, no variables or factors.
    pub fn empty_like(&self) -> Self {
        Problem { timestamps: self.timestamps.clone(), variables: BTreeMap::new(), factors: Vec::new(), ..*self }
    }

    pub fn set_timestamp(&mut self, frame: u32, time: f64) -> Result<(), GraphError> {
        let prev_ok = self.timestamps.range(..frame).next_back().is_none_or(|(_, t)| *t < time);
        let next_ok = self.timestamps.range(frame + 1..).next().is_none_or(|(_, t)| *t > time);
        if !time.is_finite() || !prev_ok || !next_ok {
            return Err(GraphError::NonMonotonicTimestamp { frame, time });
        }
        self.timestamps.insert(frame, time);
        Ok(())
    }

    pub fn timestamp(&self, frame: u32) -> Result<f64, GraphError> {
        self.timestamps.get(&frame).copied().ok_or(GraphError::MissingTimestamp { frame })
    }

    pub fn timestamps(&self) -> &BTreeMap<u32, f64> {
        &self.timestamps
    }

    pub fn add_variable(&mut self, key: VariableKey, value: Value, fixed: bool) -> Result<(), GraphError> {
        let ok = matches!(
            (key.kind(), &value),
            (VariableKind::CameraPose | VariableKind::ObjectPose, Value::Pose(_))
                | (VariableKind::ObjectTwist, Value::Twist(_))
                | (VariableKind::MapPoint | VariableKind::ObjectPoint, Value::Point(_))
        );
        if !ok {
            return Err(GraphError::WrongValueKind {
                key,
                expected: match key.kind() {
                    VariableKind::CameraPose | VariableKind::ObjectPose => "pose",
                    VariableKind::ObjectTwist => "twist",
                    _ => "point",
                },
                found: value_kind_name(&value),
            });
        }
        if self.variables.contains_key(&key) {
            return Err(GraphError::DuplicateVariable(key));
        }
        self.variables.insert(key, Variable { value, fixed });
        Ok(())
    }

    pub fn add_camera(&mut self, frame: u32, t_cw: Pose, fixed: bool) -> Result<(), GraphError> {
        self.add_variable(VariableKey::Camera { frame }, Value::Pose(t_cw), fixed)
    }

    pub fn add_object_pose(&mut self, track: u32, frame: u32, t_wo: Pose, fixed: bool) -> Result<(), GraphError> {
        self.add_variable(VariableKey::ObjectPose { track, frame }, Value::Pose(t_wo), fixed)
    }

    pub fn add_object_twist(&mut self, track: u32, frame: u32, twist: Twist, fixed: bool) -> Result<(), GraphError> {
        self.add_variable(VariableKey::ObjectTwist { track, frame }, Value::Twist(twist), fixed)
    }

    pub fn add_map_point(&mut self, point: u32, x_w: Vector3<f64>, fixed: bool) -> Result<(), GraphError> {
        self.add_variable(VariableKey::MapPoint { point }, Value::Point(x_w), fixed)
    }

    pub fn add_object_point(
        &mut self,
        track: u32,
        point: u32,
        x_o: Vector3<f64>,
        fixed: bool,
    ) -> Result<(), GraphError> {
        self.add_variable(VariableKey::ObjectPoint { track, point }, Value::Point(x_o), fixed)
    }

    /// Adds a factor after checking its variables and interval exist.
    pub fn add_factor(&mut self, factor: Factor) -> Result<(), GraphError> {
        for key in factor.keys() {
            if !self.variables.contains_key(&key) {
                return Err(GraphError::MissingVariable(key));
            }
        }
        if let Some(dt) = factor.interval(self)? {
            if !(dt > 0.0) {
                return Err(FactorError::InvalidInterval(dt).into());
            }
        }
        self.factors.push(factor);
        Ok(())
    }

    pub fn variables(&self) -> &BTreeMap<VariableKey, Variable> {
        &self.variables
    }

    pub fn variable(&self, key: &VariableKey) -> Option<&Variable> {
        self.variables.get(key)
    }

    pub fn value(&self, key: &VariableKey) -> Result<Value, GraphError> {
        self.variables.get(key).map(|v| v.value).ok_or(GraphError::MissingVariable(*key))
    }

    pub fn pose(&self, key: &VariableKey) -> Option<Pose> {
        self.variables.get(key).and_then(|v| v.value.as_pose().copied())
    }

    pub fn twist(&self, key: &VariableKey) -> Option<Twist> {
        self.variables.get(key).and_then(|v| v.value.as_twist().copied())
    }

    pub fn point(&self, key: &VariableKey) -> Option<Vector3<f64>> {
        self.variables.get(key).and_then(|v| v.value.as_point().copied())
    }

    /// Overwrites a value; the kind must not change.
    pub fn set_value(&mut self, key: &VariableKey, value: Value) -> Result<(), GraphError> {
        let var = self.variables.get_mut(key).ok_or(GraphError::MissingVariable(*key))?;
        if value_kind_name(&var.value) != value_kind_name(&value) {
            return Err(GraphError::WrongValueKind {
                key: *key,
                expected: value_kind_name(&var.value),
                found: value_kind_name(&value),
            });
        }
        var.value = value;
        Ok(())
    }

    pub fn set_fixed(&mut self, key: &VariableKey, fixed: bool) -> Result<(), GraphError> {
        self.variables.get_mut(key).ok_or(GraphError::MissingVariable(*key))?.fixed = fixed;
        Ok(())
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn free_keys(&self) -> impl Iterator<Item = &VariableKey> {
        self.variables.iter().filter(|(_, v)| !v.fixed).map(|(k, _)| k)
    }

    pub fn free_dof(&self) -> usize {
        self.variables.iter().filter(|(_, v)| !v.fixed).map(|(k, _)| k.kind().dof()).sum()
    }

    pub fn tracks(&self) -> BTreeSet<u32> {
        self.variables.keys().filter_map(|k| k.track()).collect()
    }

    /// Frames at which `track` has a pose, ascending.
    pub fn track_frames(&self, track: u32) -> Vec<u32> {
        self.variables
            .range(VariableKey::ObjectPose { track, frame: 0 }..=VariableKey::ObjectPose { track, frame: u32::MAX })
            .map(|(k, _)| k.frame().expect("pose key has a frame"))
            .collect()
    }

    pub fn camera_frames(&self) -> Vec<u32> {
        self.variables
            .range(VariableKey::Camera { frame: 0 }..=VariableKey::Camera { frame: u32::MAX })
            .map(|(k, _)| k.frame().expect("camera key has a frame"))
            .collect()
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<(), GraphError> {
        for f in &self.factors {
            for key in f.keys() {
                if !self.variables.contains_key(&key) {
                    return Err(GraphError::MissingVariable(key));
                }
            }
            if let Some(dt) = f.interval(self)? {
                if !(dt > 0.0) {
                    return Err(FactorError::InvalidInterval(dt).into());
                }
            }
        }
        for track in self.tracks() {
            let frames = self.track_frames(track);
            for w in frames.windows(2) {
                let key = VariableKey::ObjectTwist { track, frame: w[0] };
                if !self.variables.contains_key(&key) {
                    return Err(GraphError::MissingTwist(VariableKey::ObjectPose { track, frame: w[0] }));
                }
            }
        }
        for key in self.variables.keys() {
            if let Some(frame) = key.frame() {
                self.timestamp(frame)?;
            }
        }
        Ok(())
    }

    /// Number of factors attached to each variable.
    pub fn factor_degree(&self) -> BTreeMap<VariableKey, usize> {
        let mut out = BTreeMap::new();
        for f in &self.factors {
            for k in f.keys() {
                *out.entry(k).or_insert(0) += 1;
            }
        }
        out
    }

    /// Robustified cost of every factor at the current values.
    pub fn cost_report(&self) -> Result<CostReport, GraphError> {
        let mut report = CostReport::default();
        for f in &self.factors {
            match f.linearize(self, JacobianMode::Analytic) {
                Ok(eval) => {
                    let (c, _) = f.robust_loss(&self.losses).apply(eval.squared_whitened_norm());
                    report.cost += c;
                    report.residual_dims += eval.residual.len();
                }
                Err(GraphError::Factor(FactorError::Camera(_))) => report.invalid_factors += 1,
                Err(e) => return Err(e),
            }
        }
        Ok(report)
    }

    /// Stacked whitened residuals of all valid factors (diagnostics and tests).
    pub fn whitened_residuals(&self) -> Result<DVector<f64>, GraphError> {
        let mut out = Vec::new();
        for f in &self.factors {
            match f.linearize(self, JacobianMode::Analytic) {
                Ok(eval) => {
                    let l = eval.information.clone().cholesky().expect("information is positive definite").l();
                    out.extend((l.transpose() * &eval.residual).iter());
                }
                Err(GraphError::Factor(FactorError::Camera(_))) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(DVector::from_vec(out))
    }

    /// Copies the free values of `sub` into `self` (after solving a local window).
    pub fn absorb(&mut self, sub: &Problem) -> Result<(), GraphError> {
        for (key, var) in &sub.variables {
            if !var.fixed {
                self.set_value(key, var.value)?;
            }
        }
        Ok(())
    }

    /// Variable dofs actually instantiated, grouped by kind.
    pub fn enumerate_dofs(&self) -> DofEnumeration {
        let mut e = DofEnumeration::default();
        for key in self.variables.keys() {
            let d = key.kind().dof() as u64;
            match key.kind() {
                VariableKind::CameraPose => e.camera += d,
                VariableKind::ObjectPose => e.object_pose += d,
                VariableKind::ObjectTwist => e.object_twist += d,
                VariableKind::MapPoint => e.map_point += d,
                VariableKind::ObjectPoint => e.object_point += d,
            }
        }
        let mut per_frame = BTreeSet::new();
        for f in &self.factors {
            if let Factor::ObjectReprojection { frame, track, point, .. } = f {
                per_frame.insert((*frame, *track, *point));
            }
        }
        e.per_frame_object_point = 3 * per_frame.len() as u64;
        e
    }
}

/// Total robustified cost.
pub fn total_cost(p: &Problem) -> Result<f64, GraphError> {
    Ok(p.cost_report()?.cost)
}

/// Dofs counted by enumerating a problem's variables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DofEnumeration {
    pub camera: u64,
    pub object_pose: u64,
    pub object_twist: u64,
    pub map_point: u64,
    pub object_point: u64,
    /// Dofs the same observations would need if each object point were re-instantiated per frame.
    pub per_frame_object_point: u64,
}

impl DofEnumeration {
    /// Object-centric count, map points and twists excluded.
    pub fn object_centric(&self) -> u64 {
        self.camera + self.object_pose + self.object_point
    }

    /// Count for independent per-frame dynamic points.
    pub fn baseline(&self) -> u64 {
        self.camera + self.per_frame_object_point
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub n_cameras: u64,
    pub n_objects: u64,
    pub n_object_points: u64,
    pub n_map_points: u64,
    /// `6·N_c + N_c·N_o·3·N_op`: dynamic points repeated in every camera.
    pub baseline: u64,
    /// `6·N_c + N_c·6·N_o + N_o·3·N_op`: object poses over time, points stored once.
    pub object_centric: u64,
}

impl ParamCount {
    pub fn ratio(&self) -> f64 {
        self.object_centric as f64 / self.baseline as f64
    }
}

/// Parameter counts of both dynamic-point representations. Map points are not included.
pub fn parameter_counts(n_c: u64, n_o: u64, n_op: u64, n_mp: u64) -> ParamCount {
    ParamCount {
        n_cameras: n_c,
        n_objects: n_o,
        n_object_points: n_op,
        n_map_points: n_mp,
        baseline: 6 * n_c + n_c * n_o * 3 * n_op,
        object_centric: 6 * n_c + n_c * 6 * n_o + n_o * 3 * n_op,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::project_stereo;

    fn toy_intrinsics() -> StereoIntrinsics {
        StereoIntrinsics::new(100.0, 100.0, 50.0, 50.0, 0.5, 200.0, 200.0)
    }

    #[test]
    fn parameter_count_examples() {
        let c = parameter_counts(10, 10, 50, 0);
        assert_eq!(c.baseline, 15060);
        assert_eq!(c.object_centric, 2160);
        assert!((c.ratio() - 2160.0 / 15060.0).abs() < 1e-15);
        assert!((c.ratio() - 0.1434).abs() < 1e-4);

        let c = parameter_counts(1, 1, 1, 0);
        assert_eq!((c.baseline, c.object_centric), (9, 15));
        assert!(c.ratio() > 1.0);

        // n_op → ∞: ratio → 1/n_c
        let c = parameter_counts(7, 3, 100_000_000, 0);
        assert!((c.ratio() - 1.0 / 7.0).abs() < 1e-6);
    }

    #[test]
    fn single_static_factor_cost_is_squared_norm() {
        let intr = toy_intrinsics();
        let mut p = Problem::new(intr);
        p.losses = LossConfig::none();
        p.set_timestamp(0, 0.0).unwrap();
        p.add_camera(0, Pose::identity(), true).unwrap();
        let x = Vector3::new(1.0, 2.0, 4.0);
        p.add_map_point(0, x, false).unwrap();
        let obs = project_stereo(&x, &intr).unwrap();
        let shifted = StereoObservation::new(obs.u_left + 1.0, obs.v_left - 2.0, obs.u_right + 0.5);
        p.add_factor(Factor::StaticReprojection { frame: 0, point: 0, obs: shifted, information: Matrix3::identity() })
            .unwrap();
        assert!((total_cost(&p).unwrap() - (1.0 + 4.0 + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn huber_bounds_outlier_growth() {
        let intr = toy_intrinsics();
        let mut p = Problem::new(intr);
        p.set_timestamp(0, 0.0).unwrap();
        p.add_camera(0, Pose::identity(), true).unwrap();
        let x = Vector3::new(0.2, 0.1, 3.0);
        p.add_map_point(0, x, false).unwrap();
        let obs = project_stereo(&x, &intr).unwrap();
        p.add_factor(Factor::StaticReprojection { frame: 0, point: 0, obs, information: Matrix3::identity() }).unwrap();
        let before = total_cost(&p).unwrap();
        let outlier = StereoObservation::new(obs.u_left + 60.0, obs.v_left, obs.u_right + 60.0);
        p.add_factor(Factor::StaticReprojection { frame: 0, point: 0, obs: outlier, information: Matrix3::identity() })
            .unwrap();
        let s = 2.0 * 60.0f64.powi(2);
        let delta = p.losses.reprojection.delta;
        let growth = total_cost(&p).unwrap() - before;
        assert!(growth <= 2.0 * delta * s.sqrt() - delta * delta + 1e-9);
        assert!(growth < s);
    }

    #[test]
    fn factor_requires_variables_and_positive_interval() {
        let mut p = Problem::new(toy_intrinsics());
        p.set_timestamp(0, 0.0).unwrap();
        p.set_timestamp(1, 0.1).unwrap();
        let err = p.add_factor(Factor::ConstantVelocity { track: 0, from: 0, to: 1 });
        assert!(matches!(err, Err(GraphError::MissingVariable(_))));
        p.add_object_twist(0, 0, Twist::zero(), false).unwrap();
        p.add_object_twist(0, 1, Twist::zero(), false).unwrap();
        p.add_factor(Factor::ConstantVelocity { track: 0, from: 0, to: 1 }).unwrap();
        assert!(p.add_factor(Factor::ConstantVelocity { track: 0, from: 1, to: 0 }).is_err());
        assert!(p.set_timestamp(2, 0.05).is_err());
        assert!(p.add_variable(VariableKey::MapPoint { point: 0 }, Value::Twist(Twist::zero()), false).is_err());
    }

    #[test]
    fn missing_twist_is_detected() {
        let mut p = Problem::new(toy_intrinsics());
        p.set_timestamp(0, 0.0).unwrap();
        p.set_timestamp(1, 0.1).unwrap();
        p.add_object_pose(3, 0, Pose::identity(), false).unwrap();
        p.add_object_pose(3, 1, Pose::identity(), false).unwrap();
        assert!(matches!(p.validate(), Err(GraphError::MissingTwist(_))));
        p.add_object_twist(3, 0, Twist::zero(), false).unwrap();
        assert!(p.validate().is_ok());
        assert_eq!(p.track_frames(3), vec![0, 1]);
    }
}
