mod common;

use nalgebra::{Vector3, Vector6};
use objba::manifold::{delta_transform, exp_so3, log_so3, right_jacobian_so3, Pose, Twist};
use proptest::prelude::*;

fn vec3(range: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-range..range).prop_map(Vector3::from)
}

fn pose() -> impl Strategy<Value = Pose> {
    (vec3(3.0), vec3(10.0)).prop_map(|(w, t)| Pose::new(exp_so3(&w), t))
}

proptest! {
    #[test]
    fn log_inverts_exp_below_pi(w in vec3(1.8)) {
        prop_assume!(w.norm() < std::f64::consts::PI - 1e-3);
        prop_assert!((log_so3(&exp_so3(&w)) - w).norm() < 1e-9);
    }

    #[test]
    fn exp_is_orthonormal(w in vec3(10.0)) {
        let r = *exp_so3(&w).matrix();
        prop_assert!((r.transpose() * r - nalgebra::Matrix3::identity()).amax() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn local_inverts_retract(p in pose(), rho in vec3(1.0), phi in vec3(1.0)) {
        let d = Vector6::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z);
        prop_assert!((p.local(&p.retract(&d)) - d).norm() < 1e-9);
    }

    #[test]
    fn pose_inverse_composes_to_identity(p in pose(), x in vec3(20.0)) {
        let q = p.compose(&p.inverse());
        prop_assert!((q.transform_point(&x) - x).norm() < 1e-9);
        prop_assert!(q.rotation.angle() < 1e-9);
    }

    #[test]
    fn compose_is_associative(a in pose(), b in pose(), c in pose(), x in vec3(5.0)) {
        let left = a.compose(&b).compose(&c).transform_point(&x);
        let right = a.compose(&b.compose(&c)).transform_point(&x);
        prop_assert!((left - right).norm() < 1e-9);
    }

    #[test]
    fn constant_twist_rotation_composes_and_translation_scales(v in vec3(10.0), w in vec3(1.0), dt in 0.01f64..0.5) {
        let twist = Twist::new(v, w);
        let one = delta_transform(&twist, dt).unwrap();
        let two = delta_transform(&twist, 2.0 * dt).unwrap();
        prop_assert!(log_so3(&one.rotation.compose(&one.rotation).inverse().compose(&two.rotation)).norm() < 1e-12);
        prop_assert!((two.translation - 2.0 * one.translation).norm() < 1e-12);
    }

    #[test]
    fn right_jacobian_matches_perturbation(w in vec3(2.0), d in vec3(1.0)) {
        let eps = 1e-6;
        let lhs = exp_so3(&(w + d * eps));
        let rhs = exp_so3(&w).compose(&exp_so3(&(right_jacobian_so3(&w) * d * eps)));
        prop_assert!(log_so3(&lhs.inverse().compose(&rhs)).norm() < 1e-10);
    }
}

#[test]
fn log_near_pi_stays_on_the_axis() {
    let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
    for gap in [1e-3, 1e-6, 1e-9] {
        let w = axis * (std::f64::consts::PI - gap);
        let back = log_so3(&exp_so3(&w));
        assert!((back.norm() - w.norm()).abs() < 1e-6, "gap {gap}: {}", back.norm());
        assert!(back.normalize().dot(&axis).abs() > 1.0 - 1e-6);
    }
}

#[test]
fn retraction_agrees_with_test_oracle() {
    let mut rng = common::rng(3);
    for _ in 0..50 {
        let p = common::random_pose(&mut rng, 3.0, 5.0);
        let d: Vec<f64> = (0..6).map(|i| 0.01 * (i as f64 - 2.5)).collect();
        let lib = p.retract(&Vector6::from_column_slice(&d));
        let oracle = Pose::new(
            p.rotation.compose(&exp_so3(&Vector3::new(d[3], d[4], d[5]))),
            p.translation + p.rotation.rotate(&Vector3::new(d[0], d[1], d[2])),
        );
        assert!(lib.local(&oracle).norm() < 1e-12);
    }
}
