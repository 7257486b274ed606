use nalgebra::Vector3;
use objba::manifold::{exp_so3, Pose};
use objba::metrics::{ate, rpe, RpeInterval, Trajectory};
use proptest::prelude::*;

fn trajectory(seed: Vec<([f64; 3], [f64; 3])>) -> Trajectory {
    Trajectory::new(
        seed.iter()
            .enumerate()
            .map(|(k, (w, t))| {
                (
                    0.1 * k as f64,
                    Pose::new(exp_so3(&Vector3::from(*w)), Vector3::from(*t) + Vector3::new(0.0, 0.0, k as f64)),
                )
            })
            .collect(),
    )
    .unwrap()
}

fn samples(n: usize) -> impl Strategy<Value = Vec<([f64; 3], [f64; 3])>> {
    prop::collection::vec((prop::array::uniform3(-0.5f64..0.5), prop::array::uniform3(-0.5f64..0.5)), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ate_ignores_a_rigid_motion_of_the_estimate(
        gt in samples(12),
        est in samples(12),
        w in prop::array::uniform3(-3.0f64..3.0),
        t in prop::array::uniform3(-50.0f64..50.0),
    ) {
        let (gt, est) = (trajectory(gt), trajectory(est));
        let g = Pose::new(exp_so3(&Vector3::from(w)), Vector3::from(t));
        let a = ate(&est, &gt).unwrap();
        let b = ate(&est.transformed(&g), &gt).unwrap();
        prop_assert!((a - b).abs() < 1e-9 * (1.0 + a), "{} vs {}", a, b);
    }

    #[test]
    fn identical_trajectories_have_zero_error(gt in samples(8)) {
        let gt = trajectory(gt);
        prop_assert!(ate(&gt, &gt).unwrap() < 1e-12);
        let r = rpe(&gt, &gt, RpeInterval::PerFrame).unwrap();
        prop_assert!(r.translation < 1e-12 && r.rotation_deg < 1e-9);
    }

    #[test]
    fn rpe_ignores_a_rigid_motion_of_the_estimate(gt in samples(10), est in samples(10), w in prop::array::uniform3(-3.0f64..3.0)) {
        let (gt, est) = (trajectory(gt), trajectory(est));
        let g = Pose::new(exp_so3(&Vector3::from(w)), Vector3::new(4.0, -1.0, 2.0));
        let a = rpe(&est, &gt, RpeInterval::PerFrame).unwrap();
        let b = rpe(&est.transformed(&g), &gt, RpeInterval::PerFrame).unwrap();
        prop_assert!((a.translation - b.translation).abs() < 1e-9);
        prop_assert!((a.rotation_deg - b.rotation_deg).abs() < 1e-7);
    }
}

#[test]
fn ate_of_a_constant_offset_after_alignment_is_zero() {
    let gt = trajectory((0..10).map(|k| ([0.0, 0.01 * k as f64, 0.0], [k as f64, 0.0, 0.0])).collect());
    let shifted = gt.transformed(&Pose::from_translation(Vector3::new(1.0, 2.0, 3.0)));
    assert!(ate(&shifted, &gt).unwrap() < 1e-9);
}

#[test]
fn per_distance_rpe_rejects_a_too_long_interval() {
    let gt = trajectory((0..5).map(|_| ([0.0; 3], [0.0; 3])).collect());
    assert!(rpe(&gt, &gt, RpeInterval::PerDistance(100.0)).is_err());
}
