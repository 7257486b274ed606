//! Batch pipeline behind the `objba` binary: simulate, solve, evaluate, bench.
//!
//! Every artifact is a plain-text file that the next stage reads back. Reports
//! leave out wall-clock timings so that two runs with the same seed produce
//! identical bytes; timings go to a separate file.

mod estimate;

pub use estimate::{Estimate, EstimateParseError, TrackBox};

use crate::bbox::{fit_box_ransac, refine_box, BoxView, ClassPrior, RansacConfig, RefineConfig};
use crate::factors::{MotionNoise, RobustLoss};
use crate::graph::{
    build_local_window, JacobianMode, LossConfig, Problem, VariableKey, WindowTrigger, DEFAULT_WINDOW_SECONDS,
};
use crate::metrics::{self, csv_table, mot_report, EvalBox, MetricsError, RpeInterval, TrackRow, Trajectory};
use crate::simulator::{generate, perturb, Dataset, Perturbation, ProblemOptions, SceneConfig, SimError};
use crate::solver::{complexity_probe, levenberg_marquardt, probe_table, LmConfig, ProbeSize, SolveStats, SolverError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Config(String),
    #[error("dataset has no frames or no observations")]
    EmptyDataset,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Estimate(#[from] EstimateParseError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
}

fn read(path: &Path) -> Result<String, AppError> {
    std::fs::read_to_string(path).map_err(|source| AppError::Io { path: path.to_path_buf(), source })
}

fn write(path: &Path, text: &str) -> Result<(), AppError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| AppError::Io { path: dir.to_path_buf(), source })?;
    }
    std::fs::write(path, text).map_err(|source| AppError::Io { path: path.to_path_buf(), source })
}

/// How the estimate is computed from the perturbed start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMode {
    /// One Levenberg–Marquardt run over everything.
    #[default]
    Batch,
    /// A local solve per frame over the trailing window, then a batch pass.
    Windowed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub mode: SolveMode,
    pub lm: LmConfig,
    /// Overrides the Huber threshold of every factor family; `0` disables robust losses.
    pub huber_delta: Option<f64>,
    pub motion_noise: MotionNoise,
    pub window_seconds: f64,
    /// Iteration cap of each local window solve.
    pub window_max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            mode: SolveMode::Batch,
            lm: LmConfig::default(),
            huber_delta: None,
            motion_noise: MotionNoise::default(),
            window_seconds: DEFAULT_WINDOW_SECONDS,
            window_max_iters: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub min_iou: f64,
    pub camera_rpe: RpeInterval,
    pub object_rpe: RpeInterval,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            min_iou: metrics::DEFAULT_MIN_IOU,
            camera_rpe: RpeInterval::PerFrame,
            object_rpe: RpeInterval::PerDistance(1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxSettings {
    pub ransac: RansacConfig,
    pub refine: RefineConfig,
    pub priors: Vec<ClassPrior>,
}

impl Default for BoxSettings {
    fn default() -> Self {
        BoxSettings {
            ransac: RansacConfig::default(),
            refine: RefineConfig::default(),
            priors: vec![ClassPrior::car()],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSettings {
    pub sizes: Vec<ProbeSize>,
    pub repeats: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            sizes: vec![
                ProbeSize::new(10, 1, 30, 1000),
                ProbeSize::new(10, 1, 30, 2000),
                ProbeSize::new(20, 1, 30, 2000),
                ProbeSize::new(40, 1, 30, 2000),
            ],
            repeats: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Replaces both the scene seed and the perturbation seed when set.
    pub seed: Option<u64>,
    /// Scene file, relative to the run config; the inline `scene` table is used otherwise.
    pub scene_path: Option<PathBuf>,
    pub scene: SceneConfig,
    pub perturb: Perturbation,
    pub solver: SolverSettings,
    pub eval: EvalSettings,
    pub boxes: BoxSettings,
    pub bench: BenchSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            scene_path: None,
            scene: SceneConfig::default(),
            perturb: Perturbation { seed: 1, ..Default::default() },
            solver: SolverSettings::default(),
            eval: EvalSettings::default(),
            boxes: BoxSettings::default(),
            bench: BenchSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Self, AppError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| AppError::Config(e.to_string()))?;
        if let Some(rel) = &cfg.scene_path {
            let path = base_dir.map(|d| d.join(rel)).unwrap_or_else(|| rel.clone());
            cfg.scene = SceneConfig::from_toml(&read(&path)?)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, AppError> {
        Self::from_toml(&read(path)?, path.parent())
    }

    pub fn validate(&self) -> Result<(), AppError> {
        let bad = |m: &str| Err(AppError::Config(m.to_string()));
        self.scene.validate()?;
        if let Some(d) = self.solver.huber_delta {
            if !(d >= 0.0) {
                return bad("solver.huber_delta must be non-negative");
            }
        }
        let n = &self.solver.motion_noise;
        if !(n.sigma_v > 0.0 && n.sigma_w > 0.0 && n.sigma_xyz > 0.0) {
            return bad("solver.motion_noise sigmas must be positive");
        }
        if !(self.solver.window_seconds > 0.0) {
            return bad("solver.window_seconds must be positive");
        }
        let lm = &self.solver.lm;
        if !(lm.lambda_init > 0.0 && lm.lambda_up > 1.0 && lm.lambda_down > 0.0 && lm.lambda_down < 1.0) {
            return bad("solver.lm needs lambda_init > 0, lambda_up > 1 and 0 < lambda_down < 1");
        }
        if !(0.0..=1.0).contains(&self.eval.min_iou) {
            return bad("eval.min_iou must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.boxes.ransac.min_iou) || self.boxes.ransac.iters == 0 {
            return bad("boxes.ransac needs iters > 0 and min_iou in [0, 1]");
        }
        Ok(())
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, seed: Option<u64>, numeric_jacobians: bool) -> Self {
        if seed.is_some() {
            self.seed = seed;
        }
        if let Some(s) = self.seed {
            self.scene.seed = s;
            self.perturb.seed = s.wrapping_add(1);
            self.boxes.ransac.seed = s;
        }
        if numeric_jacobians {
            self.solver.lm.jacobian_mode = JacobianMode::Numeric;
        }
        self
    }

    pub fn problem_options(&self) -> ProblemOptions {
        let losses = match self.solver.huber_delta {
            None => LossConfig::default(),
            Some(0.0) => LossConfig::none(),
            Some(d) => LossConfig::uniform(RobustLoss::huber(d)),
        };
        ProblemOptions { motion_noise: self.solver.motion_noise, losses, sigma_px: None, motion_factors: true }
    }
}

/// Generates the dataset text.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<String, AppError> {
    Ok(generate(&cfg.scene)?.to_text())
}

pub struct SolveOutput {
    pub problem: Problem,
    pub stats: SolveStats,
    pub estimate: Estimate,
    /// One entry per local window solve; empty in batch mode.
    pub window_stats: Vec<SolveStats>,
}

/// Perturbs the dataset's ground truth, optimizes, then fits boxes per track.
pub fn solve_dataset(ds: &Dataset, cfg: &RunConfig) -> Result<SolveOutput, AppError> {
    if ds.frames.is_empty() || ds.observations.is_empty() {
        return Err(AppError::EmptyDataset);
    }
    let mut problem = perturb(ds, &cfg.perturb, &cfg.problem_options())?;
    let mut window_stats = Vec::new();
    if cfg.solver.mode == SolveMode::Windowed {
        let tracks: Vec<u32> = problem.tracks().into_iter().collect();
        let local = LmConfig { max_iters: cfg.solver.window_max_iters, ..cfg.solver.lm };
        for t_now in problem.timestamps().values().copied().skip(1).collect::<Vec<_>>() {
            let trigger = WindowTrigger::Both(tracks.clone());
            let mut sub = match build_local_window(&problem, &trigger, t_now, cfg.solver.window_seconds) {
                Ok(sub) => sub,
                Err(crate::graph::GraphError::EmptyWindow) => continue,
                Err(e) => return Err(e.into()),
            };
            window_stats.push(levenberg_marquardt(&mut sub, &local)?);
            problem.absorb(&sub)?;
        }
    }
    let stats = levenberg_marquardt(&mut problem, &cfg.solver.lm)?;
    let estimate = Estimate::from_problem(&problem, &fit_boxes(ds, &problem, &cfg.boxes));
    Ok(SolveOutput { problem, stats, estimate, window_stats })
}

/// RANSAC at the first detected frame of each track, then multi-view refinement.
/// Tracks without a usable box are left out.
pub fn fit_boxes(ds: &Dataset, p: &Problem, settings: &BoxSettings) -> BTreeMap<u32, TrackBox> {
    let mut out = BTreeMap::new();
    for o in &ds.objects {
        let Some(prior) = settings.priors.iter().find(|pr| pr.label == o.class) else { continue };
        let points: Vec<_> = p
            .variables()
            .keys()
            .filter(|k| matches!(k, VariableKey::ObjectPoint { track, .. } if *track == o.track))
            .filter_map(|k| p.point(k))
            .collect();
        let views: Vec<(u32, BoxView)> = ds
            .detections
            .iter()
            .filter(|d| d.track == o.track)
            .filter_map(|d| {
                let t_wo = p.pose(&VariableKey::ObjectPose { track: o.track, frame: d.frame })?;
                let t_cw = p.pose(&VariableKey::Camera { frame: d.frame })?;
                Some((d.frame, BoxView { t_wo, t_cw, detection: d.rect }))
            })
            .collect();
        let Some((_, first)) = views.first() else { continue };
        let t_ct = first.t_cw.compose(&first.t_wo);
        let initial = match fit_box_ransac(&points, &t_ct, &ds.intrinsics, &first.detection, prior, &settings.ransac) {
            Ok(b) => b,
            Err(_) => continue,
        };
        let only_views: Vec<BoxView> = views.iter().map(|(_, v)| *v).collect();
        // Fewer than three views, or a diverged refinement, keeps the RANSAC box.
        let (refined, status) = match refine_box(&initial, &only_views, &ds.intrinsics, prior, &settings.refine) {
            Ok(r) => (r.refined, "refined"),
            Err(_) => (initial, "ransac"),
        };
        out.insert(o.track, TrackBox { class: o.class.clone(), bbox: refined, status: status.to_string() });
    }
    out
}

/// Files written by [`cmd_solve`], keyed by name.
pub fn cmd_solve(dataset_text: &str, cfg: &RunConfig) -> Result<BTreeMap<&'static str, String>, AppError> {
    let ds = Dataset::from_text(dataset_text).map_err(SimError::from)?;
    let out = solve_dataset(&ds, cfg)?;
    let mut files = BTreeMap::new();
    files.insert("estimate.txt", out.estimate.to_text());
    files.insert("problem.txt", out.problem.to_text());
    files.insert("stats.json", out.stats.to_json(false));
    let timings = serde_json::json!({
        "batch_linear_solve_seconds": out.stats.linear_solve_seconds,
        "window_linear_solve_seconds": out.window_stats.iter().map(|s| s.linear_solve_seconds.clone()).collect::<Vec<_>>(),
    });
    files.insert("timings.json", serde_json::to_string_pretty(&timings).expect("json"));
    Ok(files)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: Vec<TrackRow>,
}

impl Report {
    pub fn to_csv(&self) -> String {
        csv_table(&self.rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn unit_of(interval: RpeInterval) -> String {
    match interval {
        RpeInterval::PerFrame => "m/frame deg/frame".to_string(),
        RpeInterval::PerDistance(d) => format!("m/{d}m deg/{d}m"),
    }
}

/// RPE, or NaN when the trajectory is shorter than the requested interval.
fn rpe_or_nan(est: &Trajectory, gt: &Trajectory, interval: RpeInterval) -> Result<metrics::Rpe, MetricsError> {
    match metrics::rpe(est, gt, interval) {
        Err(MetricsError::IntervalTooLong { .. }) => {
            Ok(metrics::Rpe { translation: f64::NAN, rotation_deg: f64::NAN, segments: 0 })
        }
        r => r,
    }
}

/// Compares an estimate with the dataset's ground truth.
pub fn evaluate(ds: &Dataset, est: &Estimate, settings: &EvalSettings) -> Result<Report, AppError> {
    let mut rows = Vec::new();
    let cam_est = Trajectory::new(est.cameras.iter().map(|(_, (t, p))| (*t, p.inverse())).collect())?;
    let cam_gt = Trajectory::new(ds.frames.iter().map(|f| (f.time, f.t_cw.inverse())).collect())?;
    rows.push(TrackRow {
        label: "camera".into(),
        ate: metrics::ate(&cam_est, &cam_gt)?,
        rpe: rpe_or_nan(&cam_est, &cam_gt, settings.camera_rpe)?,
        rpe_unit: unit_of(settings.camera_rpe),
        mot: None,
    });

    for o in &ds.objects {
        let poses: Vec<(u32, f64, crate::manifold::Pose)> = est
            .object_poses
            .iter()
            .filter(|((track, _), _)| *track == o.track)
            .map(|((_, frame), (t, p))| (*frame, *t, *p))
            .collect();
        if poses.len() < 2 {
            continue;
        }
        let obj_est = Trajectory::new(poses.iter().map(|(_, t, p)| (*t, *p)).collect())?;
        let obj_gt = Trajectory::new(ds.frames.iter().zip(&o.poses).map(|(f, p)| (f.time, *p)).collect())?;

        let n = ds.frames.len();
        let mut est_boxes = vec![Vec::new(); n];
        let mut gt_boxes = vec![Vec::new(); n];
        for d in ds.detections.iter().filter(|d| d.track == o.track) {
            let f = d.frame as usize;
            gt_boxes[f].push(EvalBox { track: o.track, image: Some(d.rect), world: o.bbox.in_world(&o.poses[f]) });
        }
        if let Some(tb) = est.boxes.get(&o.track) {
            for (frame, _, t_wo) in &poses {
                let Some((_, t_cw)) = est.cameras.get(frame) else { continue };
                let image = crate::bbox::project_box(&tb.bbox, t_wo, t_cw, &ds.intrinsics).ok();
                est_boxes[*frame as usize].push(EvalBox { track: o.track, image, world: tb.bbox.in_world(t_wo) });
            }
        }
        rows.push(TrackRow {
            label: format!("object{}", o.track),
            ate: metrics::ate(&obj_est, &obj_gt)?,
            rpe: rpe_or_nan(&obj_est, &obj_gt, settings.object_rpe)?,
            rpe_unit: unit_of(settings.object_rpe),
            mot: Some(mot_report(&est_boxes, &gt_boxes, settings.min_iou)?),
        });
    }
    Ok(Report { rows })
}

/// Report files (`report.csv`, `report.json`) for an estimate against a dataset.
pub fn cmd_eval(
    dataset_text: &str,
    estimate_text: &str,
    cfg: &RunConfig,
) -> Result<BTreeMap<&'static str, String>, AppError> {
    let ds = Dataset::from_text(dataset_text).map_err(SimError::from)?;
    let est = Estimate::from_text(estimate_text)?;
    let report = evaluate(&ds, &est, &cfg.eval)?;
    let mut files = BTreeMap::new();
    files.insert("report.csv", report.to_csv());
    files.insert("report.json", report.to_json());
    Ok(files)
}

/// Complexity probe table as CSV.
pub fn cmd_bench(cfg: &RunConfig) -> Result<String, AppError> {
    Ok(probe_table(&complexity_probe(&cfg.bench.sizes, cfg.bench.repeats)?))
}

/// Writes every `(name, contents)` pair under `dir`.
pub fn write_files(dir: &Path, files: &BTreeMap<&'static str, String>) -> Result<Vec<PathBuf>, AppError> {
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        write(&path, text)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_file(path: &Path) -> Result<String, AppError> {
    read(path)
}
