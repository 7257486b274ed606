use super::{Dataset, SimError, Target};
use crate::factors::{keypoint_information, MotionNoise, Value};
use crate::graph::{Factor, LossConfig, Problem, VariableKey};
use crate::manifold::Twist;
use nalgebra::{Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// How a dataset is turned into a factor graph.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemOptions {
    pub motion_noise: MotionNoise,
    pub losses: LossConfig,
    /// Pixel standard deviation for the reprojection information; the dataset's
    /// own value is used when `None`, and 1 px when that is zero.
    pub sigma_px: Option<f64>,
    /// Adds constant-velocity and velocity-coupling factors.
    pub motion_factors: bool,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        ProblemOptions {
            motion_noise: MotionNoise::default(),
            losses: LossConfig::default(),
            sigma_px: None,
            motion_factors: true,
        }
    }
}

/// Standard deviations of the initial-guess perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Perturbation {
    pub camera_translation: f64,
    pub camera_rotation_deg: f64,
    pub object_translation: f64,
    pub object_rotation_deg: f64,
    pub point: f64,
    /// Relative to the twist magnitude, floored at 0.1 m/s and 0.01 rad/s.
    pub twist_fraction: f64,
    pub seed: u64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation {
            camera_translation: 0.1,
            camera_rotation_deg: 2.0,
            object_translation: 0.1,
            object_rotation_deg: 2.0,
            point: 0.1,
            twist_fraction: 0.2,
            seed: 0,
        }
    }
}

impl Perturbation {
    pub fn zero() -> Self {
        Perturbation {
            camera_translation: 0.0,
            camera_rotation_deg: 0.0,
            object_translation: 0.0,
            object_rotation_deg: 0.0,
            point: 0.0,
            twist_fraction: 0.0,
            seed: 0,
        }
    }
}

/// Factor graph of `ds` at its ground-truth values.
///
/// Every frame gets a camera; the first one is fixed. A track gets a pose and a
/// twist at each frame where any of its points is observed, and its first pose
/// is fixed (the object frame is otherwise free under a constant twist).
/// Observations are associated by their generating point.
pub fn build_problem(ds: &Dataset, opts: &ProblemOptions) -> Result<Problem, SimError> {
    let mut p = Problem::new(ds.intrinsics);
    p.motion_noise = opts.motion_noise;
    p.losses = opts.losses;
    let sigma = opts.sigma_px.unwrap_or(ds.sigma_px);
    let info = keypoint_information(if sigma > 0.0 { sigma } else { 1.0 }, 1.0);

    for (i, f) in ds.frames.iter().enumerate() {
        p.set_timestamp(i as u32, f.time)?;
        p.add_camera(i as u32, f.t_cw, i == 0)?;
    }

    let mut map_points = BTreeSet::new();
    let mut track_frames: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    let mut object_points: BTreeSet<(u32, u32)> = BTreeSet::new();
    for ob in &ds.observations {
        match ob.target {
            Target::Static { point } => {
                map_points.insert(point);
            }
            Target::Object { track, point } => {
                track_frames.entry(track).or_default().insert(ob.frame);
                object_points.insert((track, point));
            }
        }
    }
    for &point in &map_points {
        p.add_map_point(point, ds.static_points[point as usize], false)?;
    }
    for (&track, frames) in &track_frames {
        let o = ds.object(track).expect("observed track exists");
        for (n, &frame) in frames.iter().enumerate() {
            p.add_object_pose(track, frame, o.poses[frame as usize], n == 0)?;
            p.add_object_twist(track, frame, o.twists[frame as usize], false)?;
        }
    }
    for &(track, point) in &object_points {
        let o = ds.object(track).expect("observed track exists");
        p.add_object_point(track, point, o.points[point as usize], false)?;
    }

    for ob in &ds.observations {
        let f = match ob.target {
            Target::Static { point } => {
                Factor::StaticReprojection { frame: ob.frame, point, obs: ob.obs, information: info }
            }
            Target::Object { track, point } => {
                Factor::ObjectReprojection { frame: ob.frame, track, point, obs: ob.obs, information: info }
            }
        };
        p.add_factor(f)?;
    }
    if opts.motion_factors {
        for (&track, frames) in &track_frames {
            let frames: Vec<u32> = frames.iter().copied().collect();
            for w in frames.windows(2) {
                p.add_factor(Factor::ConstantVelocity { track, from: w[0], to: w[1] })?;
                for &(_, point) in object_points.range((track, 0)..=(track, u32::MAX)) {
                    p.add_factor(Factor::VelocityCoupling { track, from: w[0], to: w[1], point })?;
                }
            }
        }
    }
    Ok(p)
}

/// Ground-truth problem with seeded Gaussian noise on every free variable.
pub fn perturb(ds: &Dataset, m: &Perturbation, opts: &ProblemOptions) -> Result<Problem, SimError> {
    let mut p = build_problem(ds, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(m.seed);
    let mut gauss = |sigma: f64| -> Vector3<f64> {
        let mut v = Vector3::zeros();
        for x in v.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *x = n * sigma;
        }
        v
    };
    let keys: Vec<VariableKey> = p.free_keys().copied().collect();
    for key in keys {
        let value = p.value(&key)?;
        let perturbed = match (key, value) {
            (VariableKey::Camera { .. }, Value::Pose(pose)) => {
                let mut d = Vector6::zeros();
                d.fixed_rows_mut::<3>(0).copy_from(&gauss(m.camera_translation));
                d.fixed_rows_mut::<3>(3).copy_from(&gauss(m.camera_rotation_deg.to_radians()));
                Value::Pose(pose.retract(&d))
            }
            (VariableKey::ObjectPose { .. }, Value::Pose(pose)) => {
                let mut d = Vector6::zeros();
                d.fixed_rows_mut::<3>(0).copy_from(&gauss(m.object_translation));
                d.fixed_rows_mut::<3>(3).copy_from(&gauss(m.object_rotation_deg.to_radians()));
                Value::Pose(pose.retract(&d))
            }
            (VariableKey::ObjectTwist { .. }, Value::Twist(t)) => {
                let sv = m.twist_fraction * t.linear.norm().max(0.1);
                let sw = m.twist_fraction * t.angular.norm().max(0.01);
                Value::Twist(Twist::new(t.linear + gauss(sv), t.angular + gauss(sw)))
            }
            (_, Value::Point(x)) => Value::Point(x + gauss(m.point)),
            (_, v) => v,
        };
        p.set_value(&key, perturbed)?;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{generate, SceneConfig};

    #[test]
    fn ground_truth_has_zero_cost() {
        let ds = generate(&SceneConfig::default()).unwrap();
        let p = build_problem(&ds, &ProblemOptions::default()).unwrap();
        let r = p.cost_report().unwrap();
        assert_eq!(r.invalid_factors, 0);
        assert!(r.cost < 1e-18, "cost {}", r.cost);
        p.validate().unwrap();
    }

    #[test]
    fn zero_perturbation_keeps_cost() {
        let ds = generate(&SceneConfig::default()).unwrap();
        let opts = ProblemOptions::default();
        let a = build_problem(&ds, &opts).unwrap().cost_report().unwrap().cost;
        let b = perturb(&ds, &Perturbation::zero(), &opts).unwrap().cost_report().unwrap().cost;
        assert_eq!(a, b);
    }

    #[test]
    fn perturbation_is_seeded_and_keeps_gauge() {
        let ds = generate(&SceneConfig::default()).unwrap();
        let opts = ProblemOptions::default();
        let m = Perturbation { seed: 3, ..Default::default() };
        let a = perturb(&ds, &m, &opts).unwrap();
        let b = perturb(&ds, &m, &opts).unwrap();
        assert_eq!(a.variables(), b.variables());
        assert_eq!(a.pose(&VariableKey::Camera { frame: 0 }), Some(ds.frames[0].t_cw));
        assert_eq!(a.pose(&VariableKey::ObjectPose { track: 1, frame: 0 }), Some(ds.objects[1].poses[0]));
        assert_ne!(a.pose(&VariableKey::Camera { frame: 1 }), Some(ds.frames[1].t_cw));
    }
}
