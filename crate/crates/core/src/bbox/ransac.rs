use super::{iou_2d, project_box, BboxError, Box2D, Box3D, ClassPrior};
use crate::camera::StereoIntrinsics;
use crate::manifold::{Pose, Rotation};
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const MIN_POINTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Hypotheses, each seeded by a first plane.
    pub iters: usize,
    /// Samples drawn for the perpendicular plane of each hypothesis.
    pub inner_iters: usize,
    /// Point-to-plane distance for an inlier, meters.
    pub inlier_tol: f64,
    /// Minimum image IoU of the winning box against the detection.
    pub min_iou: f64,
    /// Minimum share of the cloud a plane must explain.
    pub min_plane_fraction: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig { iters: 400, inner_iters: 24, inlier_tol: 0.02, min_iou: 0.3, min_plane_fraction: 0.08, seed: 0 }
    }
}

#[derive(Clone, Copy)]
struct Plane {
    normal: Vector3<f64>,
    offset: f64,
}

impl Plane {
    fn distance(&self, x: &Vector3<f64>) -> f64 {
        (self.normal.dot(x) - self.offset).abs()
    }
}

fn centroid(pts: &[Vector3<f64>]) -> Vector3<f64> {
    pts.iter().fold(Vector3::zeros(), |a, p| a + p) / pts.len() as f64
}

fn scatter(pts: &[Vector3<f64>], c: &Vector3<f64>) -> Matrix3<f64> {
    pts.iter().fold(Matrix3::zeros(), |a, p| a + (p - c) * (p - c).transpose())
}

/// Least-squares plane through `pts`.
fn refit_plane(pts: &[Vector3<f64>]) -> Option<Plane> {
    if pts.len() < 3 {
        return None;
    }
    let c = centroid(pts);
    let eig = scatter(pts, &c).symmetric_eigen();
    let k = eig.eigenvalues.imin();
    let normal: Vector3<f64> = eig.eigenvectors.column(k).into();
    Some(Plane { normal, offset: normal.dot(&c) })
}

/// Orthonormal pair spanning the plane orthogonal to `n`.
fn plane_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let a = n.cross(&helper).normalize();
    (a, n.cross(&a))
}

/// In-plane direction of least (`smallest = true`) or greatest spread of `pts`
/// after projecting out `n`.
fn in_plane_direction(pts: &[Vector3<f64>], n: &Vector3<f64>, smallest: bool) -> Vector3<f64> {
    let (a, b) = plane_basis(n);
    let c = centroid(pts);
    let mut m = Matrix2::zeros();
    for p in pts {
        let d = p - c;
        let q = Vector2::new(a.dot(&d), b.dot(&d));
        m += q * q.transpose();
    }
    let eig = m.symmetric_eigen();
    let k = if smallest { eig.eigenvalues.imin() } else { eig.eigenvalues.imax() };
    let v = eig.eigenvectors.column(k);
    (a * v[0] + b * v[1]).normalize()
}

fn extents(pts: &[Vector3<f64>], axis: &Vector3<f64>) -> (f64, f64) {
    pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        let s = axis.dot(p);
        (lo.min(s), hi.max(s))
    })
}

fn inliers(pts: &[Vector3<f64>], plane: &Plane, tol: f64) -> Vec<usize> {
    (0..pts.len()).filter(|&i| plane.distance(&pts[i]) < tol).collect()
}

fn sample_distinct(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    rand::seq::index::sample(rng, n, k).into_vec()
}

struct Hypothesis {
    iou: f64,
    support: usize,
    index: usize,
    candidate: Box3D,
}

/// Which prior dimension is hidden, given the two observed extents.
fn hidden_dimension(observed: [f64; 2], prior: &ClassPrior) -> f64 {
    let mut obs = observed;
    obs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut best = (f64::INFINITY, prior.mean_dims[0]);
    for hidden in 0..3 {
        let mut rest: Vec<f64> = (0..3).filter(|i| *i != hidden).map(|i| prior.mean_dims[i]).collect();
        rest.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cost: f64 = rest.iter().zip(&obs).map(|(p, o)| (p / o.max(1e-9)).ln().abs()).sum();
        if cost < best.0 {
            best = (cost, prior.mean_dims[hidden]);
        }
    }
    best.1
}

fn box_from_axes(axes: [Vector3<f64>; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<Box3D> {
    let m = Matrix3::from_columns(&axes);
    let center_local = Vector3::new(0.5 * (lo[0] + hi[0]), 0.5 * (lo[1] + hi[1]), 0.5 * (lo[2] + hi[2]));
    let dims = Vector3::new(hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]);
    Box3D::new(Pose::new(Rotation::orthonormalized(&m), m * center_local), dims).ok()
}

/// Box with one face on `plane`, extruded away from the camera by the prior's hidden dimension.
fn one_plane_box(
    face: &[Vector3<f64>],
    plane: &Plane,
    camera_center: &Vector3<f64>,
    prior: &ClassPrior,
) -> Option<Box3D> {
    let mut n = plane.normal;
    let c = centroid(face);
    if n.dot(&(c - camera_center)) < 0.0 {
        n = -n;
    }
    let a2 = in_plane_direction(face, &n, false);
    let a3 = n.cross(&a2);
    let (lo2, hi2) = extents(face, &a2);
    let (lo3, hi3) = extents(face, &a3);
    let depth = hidden_dimension([hi2 - lo2, hi3 - lo3], prior);
    let s = n.dot(&c);
    box_from_axes([n, a2, a3], [s, lo2, lo3], [s + depth, hi2, hi3])
}

fn two_plane_box(pts: &[Vector3<f64>], n1: &Vector3<f64>, n2: &Vector3<f64>) -> Option<Box3D> {
    let n3 = n1.cross(n2);
    let axes = [*n1, *n2, n3];
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for i in 0..3 {
        let (l, h) = extents(pts, &axes[i]);
        if !(h - l > 1e-6) {
            return None;
        }
        lo[i] = l;
        hi[i] = h;
    }
    box_from_axes(axes, lo, hi)
}

/// Fits a box to an object's points (track frame) by searching two perpendicular
/// planes; the hypothesis whose projection best overlaps `detection` wins.
///
/// `t_ct` is the observing camera relative to the track frame. When no second
/// plane is supported the hidden extent comes from `prior`.
pub fn fit_box_ransac(
    pts: &[Vector3<f64>],
    t_ct: &Pose,
    intr: &StereoIntrinsics,
    detection: &Box2D,
    prior: &ClassPrior,
    cfg: &RansacConfig,
) -> Result<Box3D, BboxError> {
    if pts.len() < MIN_POINTS {
        return Err(BboxError::TooFewPoints { found: pts.len(), required: MIN_POINTS });
    }
    let camera_center = t_ct.inverse().translation;
    let min_support = ((cfg.min_plane_fraction * pts.len() as f64).ceil() as usize).max(3);

    let hypothesis = |index: usize| -> Option<Hypothesis> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index as u64);
        let s = sample_distinct(&mut rng, pts.len(), 3);
        let normal = (pts[s[1]] - pts[s[0]]).cross(&(pts[s[2]] - pts[s[0]]));
        if normal.norm() < 1e-12 {
            return None;
        }
        let seed_plane = Plane { normal: normal.normalize(), offset: normal.normalize().dot(&pts[s[0]]) };
        let seed_inliers = inliers(pts, &seed_plane, cfg.inlier_tol);
        if seed_inliers.len() < min_support {
            return None;
        }
        let face1: Vec<_> = seed_inliers.iter().map(|&i| pts[i]).collect();
        let plane1 = refit_plane(&face1)?;
        let in1 = inliers(pts, &plane1, cfg.inlier_tol);
        let face1: Vec<_> = in1.iter().map(|&i| pts[i]).collect();
        let rest: Vec<usize> = (0..pts.len()).filter(|i| !in1.contains(i)).collect();

        let mut best2: Option<(Vec<usize>, Vector3<f64>)> = None;
        if rest.len() >= 2 {
            for _ in 0..cfg.inner_iters {
                let pair = sample_distinct(&mut rng, rest.len(), 2);
                let dir = pts[rest[pair[1]]] - pts[rest[pair[0]]];
                let n2 = dir.cross(&plane1.normal);
                if n2.norm() < 1e-9 * dir.norm().max(1e-12) {
                    continue;
                }
                let n2 = n2.normalize();
                let plane = Plane { normal: n2, offset: n2.dot(&pts[rest[pair[0]]]) };
                let support = inliers(pts, &plane, cfg.inlier_tol);
                if support.len() >= min_support && best2.as_ref().is_none_or(|(b, _)| support.len() > b.len()) {
                    best2 = Some((support, n2));
                }
            }
        }
        let (candidate, support) = match best2 {
            Some((support2, _)) => {
                let face2: Vec<_> = support2.iter().map(|&i| pts[i]).collect();
                let n2 = in_plane_direction(&face2, &plane1.normal, true);
                match two_plane_box(pts, &plane1.normal, &n2) {
                    Some(b) => (b, in1.len() + support2.len()),
                    None => (one_plane_box(&face1, &plane1, &camera_center, prior)?, face1.len()),
                }
            }
            None => (one_plane_box(&face1, &plane1, &camera_center, prior)?, face1.len()),
        };
        let projected = project_box(&candidate, &Pose::identity(), t_ct, intr).ok()?;
        Some(Hypothesis { iou: iou_2d(&projected, detection), support, index, candidate })
    };

    let best = (0..cfg.iters).into_par_iter().filter_map(hypothesis).reduce_with(|a, b| {
        let key = |h: &Hypothesis| (h.iou, h.support, std::cmp::Reverse(h.index));
        if key(&b).partial_cmp(&key(&a)) == Some(std::cmp::Ordering::Greater) {
            b
        } else {
            a
        }
    });
    match best {
        Some(h) if h.iou >= cfg.min_iou => Ok(h.candidate.aligned_to(&prior.mean_dims)),
        Some(h) => Err(BboxError::NoHypothesis { best_iou: h.iou }),
        None => Err(BboxError::NoHypothesis { best_iou: 0.0 }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::orientation_error_deg;

    fn face_grid(center: Vector3<f64>, u: Vector3<f64>, v: Vector3<f64>, n: usize) -> Vec<Vector3<f64>> {
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let a = i as f64 / (n - 1) as f64 - 0.5;
                let b = j as f64 / (n - 1) as f64 - 0.5;
                out.push(center + u * a + v * b);
            }
        }
        out
    }

    #[test]
    fn too_few_points() {
        let pts = vec![Vector3::zeros(); 9];
        let det = Box2D::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let err = fit_box_ransac(
            &pts,
            &Pose::identity(),
            &StereoIntrinsics::default(),
            &det,
            &ClassPrior::car(),
            &Default::default(),
        );
        assert_eq!(err, Err(BboxError::TooFewPoints { found: 9, required: 10 }));
    }

    #[test]
    fn two_visible_faces() {
        // Box 4 (x) × 2 (y) × 1.5 (z) at the track origin; camera looks at the −z and −x faces.
        let dims = Vector3::new(4.0, 2.0, 1.5);
        let truth = Box3D::new(Pose::identity(), dims).unwrap();
        let mut pts =
            face_grid(Vector3::new(0.0, 0.0, -0.75), Vector3::new(4.0, 0.0, 0.0), Vector3::new(0.0, 2.0, 0.0), 8);
        pts.extend(face_grid(
            Vector3::new(-2.0, 0.0, 0.0),
            Vector3::new(0.0, 0.0, 1.5),
            Vector3::new(0.0, 2.0, 0.0),
            6,
        ));
        let eye = Vector3::new(-6.0, -1.0, -12.0);
        let t_tc = Pose::new(crate::manifold::exp_so3(&Vector3::new(0.0, 0.45, 0.0)), eye);
        let t_ct = t_tc.inverse();
        let intr = StereoIntrinsics::default();
        let det = project_box(&truth, &Pose::identity(), &t_ct, &intr).unwrap();
        let fit = fit_box_ransac(&pts, &t_ct, &intr, &det, &ClassPrior::car(), &RansacConfig::default()).unwrap();
        let (c, g) = (fit.canonical(), truth.canonical());
        for i in 0..3 {
            assert!((c.dims[i] - g.dims[i]).abs() / g.dims[i] < 0.05, "{:?} vs {:?}", c.dims, g.dims);
        }
        assert!(orientation_error_deg(&fit, &truth) < 5.0);
    }
}
