//! Synthetic stereo scenes with ground truth.
//!
//! A camera and a set of rigid boxes move with piecewise-constant twists; static
//! points fill a volume and object points lie on the box surfaces. Every point
//! inside the stereo frustum of a frame yields an observation, optionally noisy
//! or replaced by an outlier. The same module hosts the small data-association
//! front-end (track initialization and constant-velocity matching) and the
//! construction of perturbed initial problems for the solver.

mod frontend;
mod problem;
mod text;

pub use frontend::{
    initialize_object_track, predict_and_match, InitializedTrack, Match, DEFAULT_GATE_PX, DEFAULT_MIN_POINTS,
};
pub use problem::{build_problem, perturb, Perturbation, ProblemOptions};
pub use text::DatasetParseError;

use crate::bbox::{project_box, Box2D, Box3D};
use crate::camera::{project_stereo, CameraError, StereoIntrinsics, StereoObservation};
use crate::manifold::{delta_transform, ManifoldError, Pose, Twist};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid scene config: {0}")]
    InvalidConfig(String),
    #[error("scene produced no visible points")]
    NoVisiblePoints,
    #[error("{found} usable observations, at least {required} needed to start a track")]
    TooFewPoints { found: usize, required: usize },
    #[error(transparent)]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Parse(#[from] DatasetParseError),
}

/// Pose given as a translation and an axis-angle rotation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSpec {
    pub translation: Vector3<f64>,
    #[serde(default)]
    pub axis_angle: Vector3<f64>,
}

impl PoseSpec {
    pub fn to_pose(&self) -> Pose {
        Pose::from_axis_angle(self.axis_angle, self.translation)
    }
}

/// Twist held from `start_frame` until the next segment starts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwistSegment {
    #[serde(default)]
    pub start_frame: usize,
    pub linear: Vector3<f64>,
    #[serde(default)]
    pub angular: Vector3<f64>,
}

fn twist_at(schedule: &[TwistSegment], frame: usize) -> Twist {
    schedule
        .iter()
        .filter(|s| s.start_frame <= frame)
        .max_by_key(|s| s.start_frame)
        .map(|s| Twist::new(s.linear, s.angular))
        .unwrap_or_default()
}

/// Camera motion. The initial pose is camera-to-world and twists are in the camera frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub initial: PoseSpec,
    pub twists: Vec<TwistSegment>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StaticPointsSpec {
    pub count: usize,
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
    /// A sampled point is kept only if at least this many frames see it.
    #[serde(default = "default_min_views")]
    pub min_views: usize,
}

fn default_min_views() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub class: String,
    /// Box extents along the object axes, meters.
    pub dims: Vector3<f64>,
    pub points: usize,
    /// Object-to-world pose at frame 0.
    pub initial: PoseSpec,
    pub twists: Vec<TwistSegment>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub n_frames: usize,
    pub frame_dt: f64,
    #[serde(default)]
    pub intrinsics: StereoIntrinsics,
    pub camera: CameraSpec,
    pub static_points: StaticPointsSpec,
    #[serde(default)]
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub sigma_px: f64,
    #[serde(default)]
    pub outlier_fraction: f64,
    /// Probability that an object observation loses its instance label.
    #[serde(default)]
    pub id_dropout: f64,
    /// Points farther than this are not observed, meters.
    #[serde(default = "default_max_depth")]
    pub max_depth: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_depth() -> f64 {
    60.0
}

impl Default for SceneConfig {
    /// Ten stereo frames at 10 Hz, 200 static points and two cars moving at
    /// constant twists, noise free.
    fn default() -> Self {
        let car = |translation: [f64; 3], yaw: f64, speed: f64, yaw_rate: f64| ObjectSpec {
            class: "car".into(),
            dims: Vector3::new(1.8, 1.5, 4.2),
            points: 30,
            initial: PoseSpec { translation: Vector3::from(translation), axis_angle: Vector3::new(0.0, yaw, 0.0) },
            twists: vec![TwistSegment {
                start_frame: 0,
                linear: Vector3::new(0.0, 0.0, speed),
                angular: Vector3::new(0.0, yaw_rate, 0.0),
            }],
        };
        SceneConfig {
            n_frames: 10,
            frame_dt: 0.1,
            intrinsics: StereoIntrinsics::default(),
            camera: CameraSpec {
                initial: PoseSpec { translation: Vector3::zeros(), axis_angle: Vector3::zeros() },
                twists: vec![TwistSegment {
                    start_frame: 0,
                    linear: Vector3::new(0.0, 0.0, 5.0),
                    angular: Vector3::new(0.0, 0.02, 0.0),
                }],
            },
            static_points: StaticPointsSpec {
                count: 200,
                min: Vector3::new(-20.0, -4.0, 8.0),
                max: Vector3::new(20.0, 1.6, 50.0),
                min_views: 2,
            },
            objects: vec![
                car([3.5, 0.9, 14.0], 0.0, 4.0, 0.15),
                car([-4.0, 0.9, 24.0], std::f64::consts::PI, 3.0, -0.1),
            ],
            sigma_px: 0.0,
            outlier_fraction: 0.0,
            id_dropout: 0.0,
            max_depth: 60.0,
            seed: 7,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.to_string()));
        if self.n_frames < 2 {
            return bad("n_frames must be at least 2");
        }
        if !(self.frame_dt > 0.0 && self.frame_dt.is_finite()) {
            return bad("frame_dt must be positive");
        }
        if !(self.sigma_px >= 0.0 && self.sigma_px.is_finite()) {
            return bad("sigma_px must be non-negative");
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return bad("outlier_fraction must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.id_dropout) {
            return bad("id_dropout must lie in [0, 1]");
        }
        if !(self.max_depth > 0.0) {
            return bad("max_depth must be positive");
        }
        let sp = &self.static_points;
        if (0..3).any(|i| !(sp.min[i] <= sp.max[i])) {
            return bad("static_points.min must not exceed static_points.max");
        }
        for (k, o) in self.objects.iter().enumerate() {
            if !o.dims.iter().all(|d| *d > 0.0) {
                return Err(SimError::InvalidConfig(format!("objects[{k}].dims must be positive")));
            }
            if o.class.is_empty() || o.class.chars().any(char::is_whitespace) {
                return Err(SimError::InvalidConfig(format!("objects[{k}].class must be a single word")));
            }
        }
        self.intrinsics.validate()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| SimError::InvalidConfig(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Static { point: u32 },
    Object { track: u32, point: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub frame: u32,
    /// Generating point; ground truth, not meant for the solver's association.
    pub target: Target,
    pub obs: StereoObservation,
    /// Replaced by a uniformly drawn pixel; hidden from the solver.
    pub outlier: bool,
    /// Instance label as a segmentation stage would provide it; `None` if dropped.
    pub instance: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub frame: u32,
    pub track: u32,
    pub rect: Box2D,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub time: f64,
    pub t_cw: Pose,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectTruth {
    pub track: u32,
    pub class: String,
    /// Box in the track frame.
    pub bbox: Box3D,
    /// Points in the track frame.
    pub points: Vec<Vector3<f64>>,
    /// `T_WO` at every frame.
    pub poses: Vec<Pose>,
    /// Twist at every frame; motion from `i` to `i+1` uses `twists[i]`.
    pub twists: Vec<Twist>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub intrinsics: StereoIntrinsics,
    pub frame_dt: f64,
    pub sigma_px: f64,
    pub frames: Vec<Frame>,
    pub static_points: Vec<Vector3<f64>>,
    pub objects: Vec<ObjectTruth>,
    pub observations: Vec<Observation>,
    pub detections: Vec<Detection>,
}

impl Dataset {
    pub fn object(&self, track: u32) -> Option<&ObjectTruth> {
        self.objects.iter().find(|o| o.track == track)
    }

    pub fn observations_in(&self, frame: u32) -> impl Iterator<Item = &Observation> {
        self.observations.iter().filter(move |o| o.frame == frame)
    }

    /// Noise-free position of the generating point in the camera frame of `frame`.
    pub fn point_in_camera(&self, frame: u32, target: Target) -> Vector3<f64> {
        let t_cw = &self.frames[frame as usize].t_cw;
        match target {
            Target::Static { point } => t_cw.transform_point(&self.static_points[point as usize]),
            Target::Object { track, point } => {
                let o = self.object(track).expect("observation of a known track");
                t_cw.transform_point(&o.poses[frame as usize].transform_point(&o.points[point as usize]))
            }
        }
    }
}

/// Whether `x_c` (camera frame) is observed: projects in front of the camera,
/// inside both images, with enough disparity and within range.
pub fn frustum_visible(x_c: &Vector3<f64>, intr: &StereoIntrinsics, max_depth: f64) -> Option<StereoObservation> {
    if x_c.z > max_depth {
        return None;
    }
    let obs = project_stereo(x_c, intr).ok()?;
    (obs.disparity() > intr.d_min && intr.in_image(&obs)).then_some(obs)
}

fn integrate(initial: Pose, schedule: &[TwistSegment], n: usize, dt: f64) -> Result<(Vec<Pose>, Vec<Twist>), SimError> {
    let mut poses = Vec::with_capacity(n);
    let mut twists = Vec::with_capacity(n);
    let mut pose = initial;
    for i in 0..n {
        let tw = twist_at(schedule, i);
        poses.push(pose);
        twists.push(tw);
        pose = pose.compose(&delta_transform(&tw, dt)?);
    }
    Ok((poses, twists))
}

/// Uniform sample on the surface of an axis-aligned box centered at the origin.
fn sample_on_box(rng: &mut ChaCha8Rng, dims: &Vector3<f64>) -> Vector3<f64> {
    let areas = [dims.y * dims.z, dims.x * dims.z, dims.x * dims.y];
    let total = 2.0 * (areas[0] + areas[1] + areas[2]);
    let mut pick = rng.random::<f64>() * total;
    let mut axis = 2;
    for (i, a) in areas.iter().enumerate() {
        if pick < 2.0 * a {
            axis = i;
            break;
        }
        pick -= 2.0 * a;
    }
    let mut x = Vector3::zeros();
    for i in 0..3 {
        x[i] = (rng.random::<f64>() - 0.5) * dims[i];
    }
    x[axis] = if rng.random::<bool>() { 0.5 } else { -0.5 } * dims[axis];
    x
}

/// Generates ground truth and observations. Deterministic for a given config.
pub fn generate(cfg: &SceneConfig) -> Result<Dataset, SimError> {
    cfg.validate()?;
    let intr = cfg.intrinsics;
    let n = cfg.n_frames;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let (camera_world, _) = integrate(cfg.camera.initial.to_pose(), &cfg.camera.twists, n, cfg.frame_dt)?;
    let frames: Vec<Frame> = camera_world
        .iter()
        .enumerate()
        .map(|(i, t_wc)| Frame { time: i as f64 * cfg.frame_dt, t_cw: t_wc.inverse() })
        .collect();

    let sp = &cfg.static_points;
    let mut static_points = Vec::with_capacity(sp.count);
    let max_attempts = 1000 * sp.count.max(1);
    let mut attempts = 0;
    while static_points.len() < sp.count && attempts < max_attempts {
        attempts += 1;
        let x = Vector3::from_fn(|i, _| sp.min[i] + rng.random::<f64>() * (sp.max[i] - sp.min[i]));
        let views = frames
            .iter()
            .filter(|f| frustum_visible(&f.t_cw.transform_point(&x), &intr, cfg.max_depth).is_some())
            .count();
        if views >= sp.min_views.max(1) {
            static_points.push(x);
        }
    }

    let mut objects = Vec::with_capacity(cfg.objects.len());
    for (k, spec) in cfg.objects.iter().enumerate() {
        let (poses, twists) = integrate(spec.initial.to_pose(), &spec.twists, n, cfg.frame_dt)?;
        let points = (0..spec.points).map(|_| sample_on_box(&mut rng, &spec.dims)).collect();
        objects.push(ObjectTruth {
            track: k as u32,
            class: spec.class.clone(),
            bbox: Box3D::new(Pose::identity(), spec.dims).map_err(|e| SimError::InvalidConfig(e.to_string()))?,
            points,
            poses,
            twists,
        });
    }

    let noise = (cfg.sigma_px > 0.0).then(|| Normal::new(0.0, cfg.sigma_px).expect("valid sigma"));
    let mut observations = Vec::new();
    let mut detections = Vec::new();
    for (i, frame) in frames.iter().enumerate() {
        let mut emit = |rng: &mut ChaCha8Rng, x_c: Vector3<f64>, target: Target, instance: Option<u32>| -> bool {
            let Some(clean) = frustum_visible(&x_c, &intr, cfg.max_depth) else { return false };
            let mut obs = clean;
            if let Some(noise) = &noise {
                obs.u_left += noise.sample(rng);
                obs.v_left += noise.sample(rng);
                obs.u_right += noise.sample(rng);
            }
            let outlier = cfg.outlier_fraction > 0.0 && rng.random::<f64>() < cfg.outlier_fraction;
            if outlier {
                let d = clean.disparity();
                obs.u_left = rng.random_range(d..intr.width);
                obs.u_right = obs.u_left - d;
            }
            let instance = instance.filter(|_| !(cfg.id_dropout > 0.0 && rng.random::<f64>() < cfg.id_dropout));
            observations.push(Observation { frame: i as u32, target, obs, outlier, instance });
            true
        };
        for (j, x) in static_points.iter().enumerate() {
            emit(&mut rng, frame.t_cw.transform_point(x), Target::Static { point: j as u32 }, None);
        }
        for o in &objects {
            let t_co = frame.t_cw.compose(&o.poses[i]);
            let mut seen = false;
            for (j, x) in o.points.iter().enumerate() {
                seen |= emit(
                    &mut rng,
                    t_co.transform_point(x),
                    Target::Object { track: o.track, point: j as u32 },
                    Some(o.track),
                );
            }
            if seen {
                if let Ok(rect) = project_box(&o.bbox, &o.poses[i], &frame.t_cw, &intr) {
                    detections.push(Detection { frame: i as u32, track: o.track, rect });
                }
            }
        }
    }
    if observations.is_empty() {
        return Err(SimError::NoVisiblePoints);
    }

    Ok(Dataset {
        intrinsics: intr,
        frame_dt: cfg.frame_dt,
        sigma_px: cfg.sigma_px,
        frames,
        static_points,
        objects,
        observations,
        detections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scene_is_fully_populated() {
        let ds = generate(&SceneConfig::default()).unwrap();
        assert_eq!(ds.frames.len(), 10);
        assert_eq!(ds.static_points.len(), 200);
        assert_eq!(ds.objects.len(), 2);
        for o in &ds.objects {
            assert_eq!(o.points.len(), 30);
            for f in 0..10u32 {
                assert!(ds
                    .observations_in(f)
                    .any(|ob| matches!(ob.target, Target::Object { track, .. } if track == o.track)));
            }
        }
        assert_eq!(ds.detections.len(), 20);
    }

    #[test]
    fn observations_pass_frustum_and_match_projection() {
        let ds = generate(&SceneConfig::default()).unwrap();
        for ob in &ds.observations {
            let x_c = ds.point_in_camera(ob.frame, ob.target);
            let clean = frustum_visible(&x_c, &ds.intrinsics, 60.0).expect("emitted points are visible");
            assert!((clean.to_vector() - ob.obs.to_vector()).norm() < 1e-9);
        }
    }

    #[test]
    fn same_seed_same_dataset() {
        let mut cfg = SceneConfig { sigma_px: 0.7, outlier_fraction: 0.05, id_dropout: 0.1, ..SceneConfig::default() };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let a = generate(&cfg).unwrap();
        cfg.seed += 1;
        assert_ne!(a, generate(&cfg).unwrap());
    }

    #[test]
    fn nothing_visible_is_an_error() {
        let mut cfg = SceneConfig::default();
        cfg.static_points.min = Vector3::new(0.0, 0.0, -50.0);
        cfg.static_points.max = Vector3::new(1.0, 1.0, -10.0);
        cfg.static_points.count = 3;
        cfg.objects.clear();
        assert!(matches!(generate(&cfg), Err(SimError::NoVisiblePoints)));
    }

    #[test]
    fn config_validation() {
        assert!(SceneConfig { frame_dt: 0.0, ..SceneConfig::default() }.validate().is_err());
        assert!(SceneConfig { outlier_fraction: 1.0, ..SceneConfig::default() }.validate().is_err());
        assert!(SceneConfig::default().validate().is_ok());
    }

    #[test]
    fn piecewise_schedule() {
        let s = [
            TwistSegment { start_frame: 0, linear: Vector3::x(), angular: Vector3::zeros() },
            TwistSegment { start_frame: 3, linear: Vector3::y(), angular: Vector3::zeros() },
        ];
        assert_eq!(twist_at(&s, 2).linear, Vector3::x());
        assert_eq!(twist_at(&s, 3).linear, Vector3::y());
        assert_eq!(twist_at(&s, 9).linear, Vector3::y());
    }
}
