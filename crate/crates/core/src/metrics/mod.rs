//! Trajectory and tracking metrics: ATE, RPE, and IoU-matched TP rate / MOTP.

use crate::bbox::{iou_2d, iou_3d, iou_bev, Box2D, WorldBox};
use crate::manifold::{Pose, Rotation};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Timestamps closer than this are considered the same instant.
pub const DEFAULT_TIME_TOL: f64 = 1e-6;

/// Minimum overlap for a true positive.
pub const DEFAULT_MIN_IOU: f64 = 0.25;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("timestamps must be strictly increasing (sample {index})")]
    NonMonotonic { index: usize },
    #[error("{found} associated samples, at least {required} needed")]
    TooFewSamples { found: usize, required: usize },
    #[error("interval of {interval} exceeds the trajectory length {available}")]
    IntervalTooLong { interval: f64, available: f64 },
    #[error("estimate covers {est} frames, ground truth {gt}")]
    FrameMismatch { est: usize, gt: usize },
}

/// Body-to-world poses ordered by time.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    samples: Vec<(f64, Pose)>,
}

impl Trajectory {
    pub fn new(samples: Vec<(f64, Pose)>) -> Result<Self, MetricsError> {
        for i in 1..samples.len() {
            if !(samples[i].0 > samples[i - 1].0) {
                return Err(MetricsError::NonMonotonic { index: i });
            }
        }
        Ok(Trajectory { samples })
    }

    pub fn samples(&self) -> &[(f64, Pose)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Applies `g` on the world side of every pose.
    pub fn transformed(&self, g: &Pose) -> Trajectory {
        Trajectory { samples: self.samples.iter().map(|(t, p)| (*t, g.compose(p))).collect() }
    }

    /// Path length of the positions.
    pub fn length(&self) -> f64 {
        self.samples.windows(2).map(|w| (w[1].1.translation - w[0].1.translation).norm()).sum()
    }
}

/// Pairs samples whose timestamps agree within `tol`.
pub fn associate(est: &Trajectory, gt: &Trajectory, tol: f64) -> Vec<(Pose, Pose)> {
    let mut out = Vec::new();
    let mut j = 0;
    for (t, p) in &est.samples {
        while j < gt.samples.len() && gt.samples[j].0 < t - tol {
            j += 1;
        }
        if j < gt.samples.len() && (gt.samples[j].0 - t).abs() <= tol {
            out.push((*p, gt.samples[j].1));
        }
    }
    out
}

/// Rigid transform `g` minimizing `Σ‖gt_i − g·est_i‖²` over positions (no scale).
pub fn align_rigid(est: &[Vector3<f64>], gt: &[Vector3<f64>]) -> Pose {
    let n = est.len().max(1) as f64;
    let ce = est.iter().fold(Vector3::zeros(), |a, x| a + x) / n;
    let cg = gt.iter().fold(Vector3::zeros(), |a, x| a + x) / n;
    let mut h = Matrix3::zeros();
    for (e, g) in est.iter().zip(gt) {
        h += (e - ce) * (g - cg).transpose();
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("svd u"), svd.v_t.expect("svd v_t"));
    let v = v_t.transpose();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = Rotation::orthonormalized(&(v * d * u.transpose()));
    let t = cg - r.rotate(&ce);
    Pose::new(r, t)
}

/// Absolute trajectory error: RMSE of position differences after rigid alignment.
pub fn ate(est: &Trajectory, gt: &Trajectory) -> Result<f64, MetricsError> {
    let pairs = associate(est, gt, DEFAULT_TIME_TOL);
    if pairs.len() < 2 {
        return Err(MetricsError::TooFewSamples { found: pairs.len(), required: 2 });
    }
    let e: Vec<_> = pairs.iter().map(|(a, _)| a.translation).collect();
    let g: Vec<_> = pairs.iter().map(|(_, b)| b.translation).collect();
    let align = align_rigid(&e, &g);
    let sq: f64 = e.iter().zip(&g).map(|(a, b)| (b - align.transform_point(a)).norm_squared()).sum();
    Ok((sq / pairs.len() as f64).sqrt())
}

/// Interval over which relative motion is compared.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RpeInterval {
    /// Consecutive samples; errors in m/frame and °/frame.
    PerFrame,
    /// Segments of this ground-truth path length; errors per that many meters.
    PerDistance(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rpe {
    pub translation: f64,
    pub rotation_deg: f64,
    pub segments: usize,
}

/// Mean relative pose error over the chosen interval.
pub fn rpe(est: &Trajectory, gt: &Trajectory, interval: RpeInterval) -> Result<Rpe, MetricsError> {
    let pairs = associate(est, gt, DEFAULT_TIME_TOL);
    if pairs.len() < 2 {
        return Err(MetricsError::TooFewSamples { found: pairs.len(), required: 2 });
    }
    let error = |i: usize, j: usize| -> (f64, f64) {
        let d_gt = pairs[i].1.inverse().compose(&pairs[j].1);
        let d_est = pairs[i].0.inverse().compose(&pairs[j].0);
        let e = d_gt.inverse().compose(&d_est);
        (e.translation.norm(), e.rotation.angle().to_degrees())
    };
    let mut sum = (0.0, 0.0);
    let mut segments = 0;
    match interval {
        RpeInterval::PerFrame => {
            for i in 0..pairs.len() - 1 {
                let (t, r) = error(i, i + 1);
                sum.0 += t;
                sum.1 += r;
                segments += 1;
            }
        }
        RpeInterval::PerDistance(d) => {
            let mut s = vec![0.0];
            for k in 1..pairs.len() {
                s.push(s[k - 1] + (pairs[k].1.translation - pairs[k - 1].1.translation).norm());
            }
            let total = *s.last().expect("non-empty");
            if !(d > 0.0) || d > total {
                return Err(MetricsError::IntervalTooLong { interval: d, available: total });
            }
            for i in 0..pairs.len() {
                if let Some(j) = (i + 1..pairs.len()).find(|&j| s[j] - s[i] >= d) {
                    let (t, r) = error(i, j);
                    let scale = d / (s[j] - s[i]);
                    sum.0 += t * scale;
                    sum.1 += r * scale;
                    segments += 1;
                }
            }
        }
    }
    Ok(Rpe { translation: sum.0 / segments as f64, rotation_deg: sum.1 / segments as f64, segments })
}

/// Which overlap measure decides a true positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Overlap {
    Image,
    BirdView,
    Volume,
}

/// A box of one track at one frame, in the image and in the world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalBox {
    pub track: u32,
    pub image: Option<Box2D>,
    pub world: WorldBox,
}

fn overlap(a: &EvalBox, b: &EvalBox, flavor: Overlap) -> Option<f64> {
    match flavor {
        Overlap::Image => Some(iou_2d(a.image.as_ref()?, b.image.as_ref()?)),
        Overlap::BirdView => Some(iou_bev(&a.world, &b.world)),
        Overlap::Volume => Some(iou_3d(&a.world, &b.world)),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MotScore {
    pub true_positives: usize,
    pub ground_truth: usize,
    /// Matched ground truth over all ground truth, percent.
    pub tp_percent: f64,
    /// Mean IoU over true positives, percent.
    pub motp_percent: f64,
}

/// Greedy one-to-one matching by decreasing IoU; returns `(est, gt, iou)` triples.
pub fn greedy_match(est: &[EvalBox], gt: &[EvalBox], flavor: Overlap, min_iou: f64) -> Vec<(usize, usize, f64)> {
    let mut pairs = Vec::new();
    for (i, e) in est.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            if let Some(iou) = overlap(e, g, flavor) {
                if iou >= min_iou {
                    pairs.push((i, j, iou));
                }
            }
        }
    }
    pairs.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
    let mut used_e = vec![false; est.len()];
    let mut used_g = vec![false; gt.len()];
    let mut out = Vec::new();
    for (i, j, iou) in pairs {
        if !used_e[i] && !used_g[j] {
            used_e[i] = true;
            used_g[j] = true;
            out.push((i, j, iou));
        }
    }
    out
}

/// TP rate and MOTP over frame-aligned box lists.
pub fn mot_evaluate(
    est: &[Vec<EvalBox>],
    gt: &[Vec<EvalBox>],
    flavor: Overlap,
    min_iou: f64,
) -> Result<MotScore, MetricsError> {
    if est.len() != gt.len() {
        return Err(MetricsError::FrameMismatch { est: est.len(), gt: gt.len() });
    }
    let mut score = MotScore::default();
    let mut iou_sum = 0.0;
    for (e, g) in est.iter().zip(gt) {
        let matches = greedy_match(e, g, flavor, min_iou);
        score.true_positives += matches.len();
        score.ground_truth += g.len();
        iou_sum += matches.iter().map(|m| m.2).sum::<f64>();
    }
    if score.ground_truth > 0 {
        score.tp_percent = 100.0 * score.true_positives as f64 / score.ground_truth as f64;
    }
    if score.true_positives > 0 {
        score.motp_percent = 100.0 * iou_sum / score.true_positives as f64;
    }
    Ok(score)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MotReport {
    pub image: MotScore,
    pub bird_view: MotScore,
    pub volume: MotScore,
}

pub fn mot_report(est: &[Vec<EvalBox>], gt: &[Vec<EvalBox>], min_iou: f64) -> Result<MotReport, MetricsError> {
    Ok(MotReport {
        image: mot_evaluate(est, gt, Overlap::Image, min_iou)?,
        bird_view: mot_evaluate(est, gt, Overlap::BirdView, min_iou)?,
        volume: mot_evaluate(est, gt, Overlap::Volume, min_iou)?,
    })
}

/// One line of the per-track table; `mot` is absent for the camera.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub label: String,
    pub ate: f64,
    pub rpe: Rpe,
    pub rpe_unit: String,
    pub mot: Option<MotReport>,
}

pub fn csv_table(rows: &[TrackRow]) -> String {
    let mut out = String::from(
        "track,ate_m,rpe_t,rpe_r_deg,rpe_unit,tp_2d_pct,motp_2d_pct,tp_bv_pct,motp_bv_pct,tp_3d_pct,motp_3d_pct\n",
    );
    for r in rows {
        write!(out, "{},{:.6e},{:.6e},{:.6e},{}", r.label, r.ate, r.rpe.translation, r.rpe.rotation_deg, r.rpe_unit)
            .unwrap();
        match &r.mot {
            Some(m) => {
                for s in [m.image, m.bird_view, m.volume] {
                    write!(out, ",{:.4},{:.4}", s.tp_percent, s.motp_percent).unwrap();
                }
            }
            None => out.push_str(",,,,,,"),
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::exp_so3;

    fn line(n: usize) -> Trajectory {
        Trajectory::new((0..n).map(|i| (i as f64, Pose::from_translation(Vector3::new(i as f64, 0.0, 0.0)))).collect())
            .unwrap()
    }

    #[test]
    fn identical_and_shifted() {
        let gt = line(10);
        assert!(ate(&gt, &gt).unwrap() < 1e-12);
        let shifted = gt.transformed(&Pose::from_translation(Vector3::new(3.0, -1.0, 2.0)));
        assert!(ate(&shifted, &gt).unwrap() < 1e-12);
        let r = rpe(&gt, &gt, RpeInterval::PerFrame).unwrap();
        assert_eq!((r.translation, r.rotation_deg), (0.0, 0.0));
    }

    #[test]
    fn one_displaced_sample_against_brute_force_alignment() {
        // Line along x plus one sample displaced by 1 m along y. The optimal rigid
        // alignment is found by a brute-force search over translation along y and
        // rotation about z, the only directions that can reduce the error here.
        let n = 8;
        let gt = line(n);
        let mut samples = gt.samples().to_vec();
        samples[3].1.translation.y += 1.0;
        let est = Trajectory::new(samples).unwrap();
        let got = ate(&est, &gt).unwrap();

        let e: Vec<_> = est.samples().iter().map(|s| s.1.translation).collect();
        let g: Vec<_> = gt.samples().iter().map(|s| s.1.translation).collect();
        let rmse = |yaw: f64, ty: f64, tx: f64| {
            let r = exp_so3(&Vector3::new(0.0, 0.0, yaw));
            let s: f64 =
                e.iter().zip(&g).map(|(a, b)| (b - (r.rotate(a) + Vector3::new(tx, ty, 0.0))).norm_squared()).sum();
            (s / n as f64).sqrt()
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let mut span = (0.02, 0.2);
        for _ in 0..6 {
            let (c_yaw, c_ty) = (best.1, best.2);
            for a in -10..=10 {
                for b in -10..=10 {
                    let yaw = c_yaw + span.0 * a as f64 / 10.0;
                    let ty = c_ty + span.1 * b as f64 / 10.0;
                    // For a fixed yaw the best x shift is the mean residual along x.
                    let r = exp_so3(&Vector3::new(0.0, 0.0, yaw));
                    let tx = e.iter().zip(&g).map(|(p, q)| q.x - r.rotate(p).x).sum::<f64>() / n as f64;
                    let v = rmse(yaw, ty, tx);
                    if v < best.0 {
                        best = (v, yaw, ty);
                    }
                }
            }
            span = (span.0 / 5.0, span.1 / 5.0);
        }
        let best = best.0;
        assert!(got <= best + 1e-9);
        assert!(best - got < 1e-4);
        // Without alignment the error would be 1/√N; alignment can only lower it.
        assert!(got < 1.0 / (n as f64).sqrt());
    }

    #[test]
    fn constant_drift_per_frame() {
        let gt = line(6);
        let delta = Vector3::new(0.0, 0.02, -0.01);
        let est = Trajectory::new(
            gt.samples()
                .iter()
                .enumerate()
                .map(|(k, (t, p))| (*t, Pose::from_translation(p.translation + delta * k as f64)))
                .collect(),
        )
        .unwrap();
        let r = rpe(&est, &gt, RpeInterval::PerFrame).unwrap();
        assert!((r.translation - delta.norm()).abs() < 1e-12);
        assert!(r.rotation_deg.abs() < 1e-12);
    }

    #[test]
    fn yaw_drift_per_frame() {
        let gt = line(6);
        let step = 0.1f64.to_radians();
        let est = Trajectory::new(
            gt.samples()
                .iter()
                .enumerate()
                .map(|(k, (t, p))| (*t, Pose::new(exp_so3(&Vector3::new(0.0, step * k as f64, 0.0)), p.translation)))
                .collect(),
        )
        .unwrap();
        let r = rpe(&est, &gt, RpeInterval::PerFrame).unwrap();
        assert!((r.rotation_deg - 0.1).abs() < 1e-9);
    }

    #[test]
    fn interval_too_long() {
        let gt = line(4);
        assert!(matches!(rpe(&gt, &gt, RpeInterval::PerDistance(10.0)), Err(MetricsError::IntervalTooLong { .. })));
        assert!(rpe(&gt, &gt, RpeInterval::PerDistance(2.0)).is_ok());
    }

    #[test]
    fn too_few_samples() {
        let gt = line(1);
        assert_eq!(ate(&gt, &gt), Err(MetricsError::TooFewSamples { found: 1, required: 2 }));
        assert!(Trajectory::new(vec![(1.0, Pose::identity()), (1.0, Pose::identity())]).is_err());
    }

    fn eval_box(track: u32, x: f64, rect: Box2D) -> EvalBox {
        EvalBox {
            track,
            image: Some(rect),
            world: WorldBox {
                pose: Pose::from_translation(Vector3::new(x, 0.0, 10.0)),
                dims: Vector3::new(1.8, 1.5, 4.2),
            },
        }
    }

    #[test]
    fn perfect_and_missing_detections() {
        let rect = Box2D::new(10.0, 10.0, 50.0, 40.0).unwrap();
        let gt = vec![vec![eval_box(0, 0.0, rect), eval_box(1, 5.0, rect)]; 3];
        let rep = mot_report(&gt, &gt, DEFAULT_MIN_IOU).unwrap();
        for s in [rep.bird_view, rep.volume] {
            assert_eq!((s.tp_percent, s.motp_percent), (100.0, 100.0));
        }
        // Identical image rectangles for both tracks still give a perfect one-to-one match.
        assert_eq!(rep.image.tp_percent, 100.0);
        let none = vec![Vec::new(); 3];
        assert_eq!(mot_evaluate(&none, &gt, Overlap::Volume, 0.25).unwrap().tp_percent, 0.0);
    }

    #[test]
    fn half_overlap_in_image() {
        let g = Box2D::new(0.0, 0.0, 2.0, 1.0).unwrap();
        // Shifted by 2/3 of the width: overlap 4/3, union 8/3.
        let e = Box2D::new(2.0 / 3.0, 0.0, 8.0 / 3.0, 1.0).unwrap();
        let s = mot_evaluate(&[vec![eval_box(0, 0.0, e)]], &[vec![eval_box(0, 0.0, g)]], Overlap::Image, 0.25).unwrap();
        assert!((s.motp_percent - 50.0).abs() < 1e-9);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let rows = vec![TrackRow {
            label: "camera".into(),
            ate: 0.0,
            rpe: Rpe { translation: 0.0, rotation_deg: 0.0, segments: 3 },
            rpe_unit: "m/frame".into(),
            mot: None,
        }];
        let csv = csv_table(&rows);
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().nth(1).unwrap().split(',').count(), 11);
    }
}
