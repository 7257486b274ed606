use super::{project_box, BboxError, Box2D, Box3D, ClassPrior};
use crate::camera::StereoIntrinsics;
use crate::manifold::Pose;
use nalgebra::{DMatrix, DVector, SVector, Vector3, Vector6};
use serde::{Deserialize, Serialize};

/// One keyframe that saw the object: track pose, camera pose and its 2D detection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxView {
    pub t_wo: Pose,
    pub t_cw: Pose,
    pub detection: Box2D,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    /// Weight of the squared pixel edge differences.
    pub edge_weight: f64,
    /// Weight of the squared, std-normalized dimension prior.
    pub dims_weight: f64,
    /// Weight of the squared tangent distance to the initial box pose.
    pub pose_weight: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        RefineConfig { edge_weight: 1.0, dims_weight: 1.0, pose_weight: 0.1, max_iters: 100, tol: 1e-12 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RefineResult {
    pub refined: Box3D,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    /// Largest absolute edge difference over all views after refinement, pixels.
    pub max_edge_error: f64,
}

type Params = SVector<f64, 9>;

fn apply(b: &Box3D, d: &Params) -> Box3D {
    let dp: Vector6<f64> = d.fixed_rows::<6>(0).into_owned();
    Box3D { pose: b.pose.retract(&dp), dims: b.dims + d.fixed_rows::<3>(6) }
}

struct Objective<'a> {
    views: &'a [BoxView],
    intr: &'a StereoIntrinsics,
    prior: &'a ClassPrior,
    anchor: Pose,
    cfg: &'a RefineConfig,
}

impl Objective<'_> {
    fn residual(&self, b: &Box3D) -> Option<DVector<f64>> {
        if !b.dims.iter().all(|d| *d > 0.0) {
            return None;
        }
        let n = 4 * self.views.len() + 9;
        let mut r = DVector::zeros(n);
        let we = self.cfg.edge_weight.sqrt();
        for (k, view) in self.views.iter().enumerate() {
            let projected = project_box(b, &view.t_wo, &view.t_cw, self.intr).ok()?;
            r.fixed_rows_mut::<4>(4 * k).copy_from(&((projected.edges() - view.detection.edges()) * we));
        }
        let base = 4 * self.views.len();
        let wd = self.cfg.dims_weight.sqrt();
        let dims_r: Vector3<f64> = (b.dims - self.prior.mean_dims).component_div(&self.prior.std_dims) * wd;
        r.fixed_rows_mut::<3>(base).copy_from(&dims_r);
        r.fixed_rows_mut::<6>(base + 3).copy_from(&(self.anchor.local(&b.pose) * self.cfg.pose_weight.sqrt()));
        Some(r)
    }

    fn jacobian(&self, b: &Box3D, rows: usize) -> Option<DMatrix<f64>> {
        let h = 1e-6;
        let mut j = DMatrix::zeros(rows, 9);
        for c in 0..9 {
            let mut d = Params::zeros();
            d[c] = h;
            let plus = self.residual(&apply(b, &d))?;
            d[c] = -h;
            let minus = self.residual(&apply(b, &d))?;
            j.set_column(c, &((plus - minus) / (2.0 * h)));
        }
        Some(j)
    }
}

/// Refines box pose (in the track frame) and dims so that its projections match
/// the detections of at least three views, with soft priors on the dimensions
/// and on the initial pose. Levenberg–Marquardt; a step is kept only if it
/// lowers the objective.
pub fn refine_box(
    initial: &Box3D,
    views: &[BoxView],
    intr: &StereoIntrinsics,
    prior: &ClassPrior,
    cfg: &RefineConfig,
) -> Result<RefineResult, BboxError> {
    if views.len() < 3 {
        return Err(BboxError::NotObservable { views: views.len() });
    }
    // The dimension prior is per axis, so the box axes must follow its order.
    let initial = initial.aligned_to(&prior.mean_dims);
    for v in views {
        project_box(&initial, &v.t_wo, &v.t_cw, intr)?;
    }
    let obj = Objective { views, intr, prior, anchor: initial.pose, cfg };
    let mut current = initial;
    let mut r = obj.residual(&current).ok_or(BboxError::BehindCamera)?;
    let initial_cost = r.norm_squared();
    let mut cost = initial_cost;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let Some(j) = obj.jacobian(&current, r.len()) else { break };
        let h = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = h.clone();
            for i in 0..9 {
                damped[(i, i)] += lambda * h[(i, i)].max(1e-9);
            }
            let step = damped.cholesky().map(|c| -c.solve(&g));
            if let Some(step) = step {
                let candidate = apply(&current, &Params::from_iterator(step.iter().copied()));
                if let Some(rc) = obj.residual(&candidate) {
                    let c = rc.norm_squared();
                    if c < cost {
                        let decrease = cost - c;
                        current = candidate;
                        r = rc;
                        cost = c;
                        lambda = (lambda * 0.1).max(1e-12);
                        improved = decrease > cfg.tol * initial_cost.max(1e-300);
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let mut max_edge_error: f64 = 0.0;
    for v in views {
        let p = project_box(&current, &v.t_wo, &v.t_cw, intr)?;
        max_edge_error = max_edge_error.max((p.edges() - v.detection.edges()).abs().max());
    }
    Ok(RefineResult { refined: current, initial_cost, final_cost: cost, iterations, max_edge_error })
}
