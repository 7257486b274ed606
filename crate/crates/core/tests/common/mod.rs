//! Helpers shared by the integration tests: random geometry, a finite-difference
//! oracle and a small hand-built problem generator.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector6};
use objba::camera::project_stereo;
use objba::factors::Value;
use objba::graph::{Factor, Problem};
use objba::manifold::{exp_so3, Pose, Twist};
use objba::StereoIntrinsics;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gauss3(rng: &mut ChaCha8Rng, sigma: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| StandardNormal.sample(rng)) * sigma
}

pub fn uniform3(rng: &mut ChaCha8Rng, lo: Vector3<f64>, hi: Vector3<f64>) -> Vector3<f64> {
    Vector3::from_fn(|i, _| rng.random_range(lo[i]..hi[i]))
}

/// Random rotation of up to about `max_angle` radians and translation within `±trans`.
pub fn random_pose(rng: &mut ChaCha8Rng, max_angle: f64, trans: f64) -> Pose {
    let axis = gauss3(rng, 1.0).normalize();
    let angle = rng.random_range(0.0..max_angle);
    Pose::new(exp_so3(&(axis * angle)), uniform3(rng, Vector3::repeat(-trans), Vector3::repeat(trans)))
}

pub fn random_twist(rng: &mut ChaCha8Rng, v: f64, w: f64) -> Twist {
    Twist::new(
        uniform3(rng, Vector3::repeat(-v), Vector3::repeat(v)),
        uniform3(rng, Vector3::repeat(-w), Vector3::repeat(w)),
    )
}

/// Moves a value by `delta` in its own tangent space: right-multiplied pose increment
/// `(R·Exp(φ), t + R·ρ)` with `delta = [ρ; φ]`, additive for twists and points.
fn nudge(v: &Value, delta: &[f64]) -> Value {
    match v {
        Value::Pose(p) => {
            let rho = Vector3::new(delta[0], delta[1], delta[2]);
            let phi = Vector3::new(delta[3], delta[4], delta[5]);
            let r = p.rotation.compose(&exp_so3(&phi));
            Value::Pose(Pose::new(r, p.translation + p.rotation.rotate(&rho)))
        }
        Value::Twist(t) => Value::Twist(Twist::from_vector(&(t.to_vector() + Vector6::from_column_slice(delta)))),
        Value::Point(x) => Value::Point(x + Vector3::from_column_slice(delta)),
    }
}

/// Central differences of `f` with respect to each value, step `h`.
pub fn finite_differences(values: &[Value], h: f64, f: impl Fn(&[Value]) -> DVector<f64>) -> Vec<DMatrix<f64>> {
    let m = f(values).len();
    let mut out = Vec::with_capacity(values.len());
    for (vi, v) in values.iter().enumerate() {
        let dof = v.dof();
        let mut jac = DMatrix::zeros(m, dof);
        let mut vals = values.to_vec();
        for k in 0..dof {
            let mut d = vec![0.0; dof];
            d[k] = h;
            vals[vi] = nudge(v, &d);
            let plus = f(&vals);
            d[k] = -h;
            vals[vi] = nudge(v, &d);
            let minus = f(&vals);
            jac.set_column(k, &((plus - minus) / (2.0 * h)));
        }
        out.push(jac);
    }
    out
}

/// Worst violation of `|a − n| ≤ abs + rel·max|n|`, as a ratio (≤ 1 passes).
pub fn jacobian_violation(analytic: &DMatrix<f64>, numeric: &DMatrix<f64>, rel: f64, abs: f64) -> f64 {
    let scale = numeric.amax();
    let bound = abs + rel * scale;
    (analytic - numeric).amax() / bound
}

/// Camera `k` of the toy rig: moving forward and slightly right, small wobble.
pub fn rig_camera(rng: &mut ChaCha8Rng, k: u32) -> Pose {
    let center = Vector3::new(0.3 * k as f64, 0.0, 0.5 * k as f64);
    let r_wc = exp_so3(&gauss3(rng, 0.01));
    Pose::new(r_wc, center).inverse()
}

/// Toy track pose at frame `k`: a car 10–12 m ahead drifting along +z.
pub fn rig_object(rng: &mut ChaCha8Rng, k: u32) -> Pose {
    Pose::new(
        exp_so3(&(Vector3::new(0.0, 0.1 * k as f64, 0.0) + gauss3(rng, 0.01))),
        Vector3::new(1.0, 0.3, 11.0 + 0.3 * k as f64),
    )
}

/// Sizes of a hand-built problem.
#[derive(Clone, Copy, Debug)]
pub struct ToySize {
    pub cameras: u32,
    pub object_points: u32,
    pub map_points: u32,
}

/// Everything observed from every camera, one track with a pose and twist per
/// frame, constant-velocity and coupling factors between consecutive frames.
/// Observations carry `noise_px` of Gaussian noise so residuals are not zero.
/// The first camera and first object pose are fixed.
pub fn toy_problem(seed: u64, size: ToySize, noise_px: f64) -> Problem {
    let mut rng = rng(seed);
    let intr = StereoIntrinsics::default();
    let mut p = Problem::new(intr);
    let info = Matrix3::identity();
    let cams: Vec<Pose> = (0..size.cameras).map(|k| rig_camera(&mut rng, k)).collect();
    let objs: Vec<Pose> = (0..size.cameras).map(|k| rig_object(&mut rng, k)).collect();
    let mps: Vec<Vector3<f64>> = (0..size.map_points)
        .map(|_| uniform3(&mut rng, Vector3::new(-3.0, -1.0, 9.0), Vector3::new(4.0, 1.0, 16.0)))
        .collect();
    let ops: Vec<Vector3<f64>> =
        (0..size.object_points).map(|_| uniform3(&mut rng, Vector3::repeat(-0.8), Vector3::repeat(0.8))).collect();
    for k in 0..size.cameras {
        p.set_timestamp(k, 0.1 * k as f64).unwrap();
        p.add_camera(k, cams[k as usize], k == 0).unwrap();
        p.add_object_pose(0, k, objs[k as usize], k == 0).unwrap();
        p.add_object_twist(0, k, random_twist(&mut rng, 3.0, 0.3), false).unwrap();
    }
    for (i, x) in mps.iter().enumerate() {
        p.add_map_point(i as u32, x + gauss3(&mut rng, 0.05), false).unwrap();
    }
    for (j, x) in ops.iter().enumerate() {
        p.add_object_point(0, j as u32, x + gauss3(&mut rng, 0.05), false).unwrap();
    }
    let noisy = |rng: &mut ChaCha8Rng, x_c: Vector3<f64>| {
        let o = project_stereo(&x_c, &intr).expect("toy rig keeps points in front");
        assert!(intr.in_image(&o), "toy rig keeps points in the image");
        objba::StereoObservation::from_vector(&(o.to_vector() + gauss3(rng, noise_px)))
    };
    for k in 0..size.cameras {
        let t_cw = cams[k as usize];
        for (i, x) in mps.iter().enumerate() {
            let obs = noisy(&mut rng, t_cw.transform_point(x));
            p.add_factor(Factor::StaticReprojection { frame: k, point: i as u32, obs, information: info }).unwrap();
        }
        for (j, x) in ops.iter().enumerate() {
            let obs = noisy(&mut rng, t_cw.transform_point(&objs[k as usize].transform_point(x)));
            p.add_factor(Factor::ObjectReprojection { frame: k, track: 0, point: j as u32, obs, information: info })
                .unwrap();
        }
        if k + 1 < size.cameras {
            p.add_factor(Factor::ConstantVelocity { track: 0, from: k, to: k + 1 }).unwrap();
            for j in 0..size.object_points {
                p.add_factor(Factor::VelocityCoupling { track: 0, from: k, to: k + 1, point: j }).unwrap();
            }
        }
    }
    p
}

/// Deterministic random problem sizes with at most `max_vars` variables.
pub fn random_toy_size(rng: &mut ChaCha8Rng, max_vars: u32) -> ToySize {
    loop {
        let size = ToySize {
            cameras: rng.random_range(2..=5),
            object_points: rng.random_range(1..=12),
            map_points: rng.random_range(0..=25),
        };
        if 3 * size.cameras + size.object_points + size.map_points <= max_vars {
            return size;
        }
    }
}
