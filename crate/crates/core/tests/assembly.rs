mod common;

use common::{finite_differences, random_toy_size, toy_problem, ToySize};
use nalgebra::{DMatrix, DVector};
use objba::factors::Value;
use objba::graph::{JacobianMode, LossConfig, VariableKey};
use objba::solver::{assemble, levenberg_marquardt, marginal_covariances, BlockLayout, LmConfig, Slot};

/// Free values in layout order and a closure that writes them back and returns
/// the stacked whitened residuals.
fn free_values(p: &objba::Problem, layout: &BlockLayout) -> (Vec<VariableKey>, Vec<Value>) {
    let keys: Vec<VariableKey> = layout.slots().map(|s| layout.key(s)).collect();
    let values = keys.iter().map(|k| p.value(k).unwrap()).collect();
    (keys, values)
}

#[test]
fn normal_equations_match_finite_difference_jacobian() {
    let mut rng = common::rng(21);
    for seed in 0..6 {
        let mut p = toy_problem(seed, random_toy_size(&mut rng, 30), 0.5);
        p.losses = LossConfig::none();
        let layout = BlockLayout::from_problem(&p);
        let (sys, _) = assemble(&p, &layout, JacobianMode::Analytic).unwrap();
        let (h, b) = sys.to_dense();

        let (keys, values) = free_values(&p, &layout);
        let residual = |vals: &[Value]| {
            let mut q = p.clone();
            for (k, v) in keys.iter().zip(vals) {
                q.set_value(k, *v).unwrap();
            }
            q.whitened_residuals().unwrap()
        };
        let blocks = finite_differences(&values, 1e-6, residual);
        let j = DMatrix::from_columns(
            &blocks
                .iter()
                .flat_map(|m| m.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        );
        let r: DVector<f64> = residual(&values);
        let h_fd = j.transpose() * &j;
        let b_fd = -j.transpose() * r;
        let scale = h_fd.amax();
        assert!(
            (&h - &h_fd).amax() < 1e-5 * scale,
            "seed {seed}: H differs by {:.3e} of {scale:.3e}",
            (&h - &h_fd).amax()
        );
        assert!(
            (&b - &b_fd).amax() < 1e-5 * (1.0 + b_fd.amax()),
            "seed {seed}: b differs by {:.3e}",
            (&b - &b_fd).amax()
        );
    }
}

#[test]
fn assembled_hessian_is_symmetric_positive_semidefinite() {
    let p = toy_problem(4, ToySize { cameras: 4, object_points: 6, map_points: 10 }, 1.0);
    let layout = BlockLayout::from_problem(&p);
    let (h, _) = assemble(&p, &layout, JacobianMode::Analytic).unwrap().0.to_dense();
    assert!((&h - h.transpose()).amax() <= 1e-12 * h.amax());
    let min_eig = h.symmetric_eigenvalues().min();
    assert!(min_eig > -1e-9 * h.amax(), "{min_eig}");
}

#[test]
fn marginal_covariances_match_dense_inverse() {
    let p = toy_problem(9, ToySize { cameras: 4, object_points: 8, map_points: 15 }, 1.0);
    let layout = BlockLayout::from_problem(&p);
    let (h, _) = assemble(&p, &layout, JacobianMode::Analytic).unwrap().0.to_dense();
    let inverse = h.try_inverse().expect("toy problem is well constrained");
    let keys: Vec<VariableKey> = layout.co_keys().to_vec();
    let cov = marginal_covariances(&p, &keys).unwrap();
    for key in keys {
        let Some(Slot::Co(i)) = layout.slot(&key) else { panic!("{key} is not a camera/object block") };
        let dense = inverse.view((6 * i, 6 * i), (6, 6));
        let err = (&cov[&key] - dense).amax();
        assert!(err < 1e-8 * dense.amax(), "{key}: {err:.3e}");
    }
}

#[test]
fn points_have_no_marginal_covariance() {
    let p = toy_problem(2, ToySize { cameras: 3, object_points: 2, map_points: 4 }, 0.0);
    assert!(marginal_covariances(&p, &[VariableKey::MapPoint { point: 0 }]).is_err());
}

#[test]
fn lm_never_raises_the_cost_and_leaves_the_gauge_alone() {
    let mut rng = common::rng(5);
    for seed in 0..8 {
        let mut p = toy_problem(100 + seed, random_toy_size(&mut rng, 40), 1.0);
        let fixed: Vec<(VariableKey, Value)> =
            p.variables().iter().filter(|(_, v)| v.fixed).map(|(k, v)| (*k, v.value)).collect();
        let stats = levenberg_marquardt(&mut p, &LmConfig::default()).unwrap();
        assert!(stats.cost_trace.windows(2).all(|w| w[1] <= w[0]), "seed {seed}: {:?}", stats.cost_trace);
        assert!(stats.final_cost() < stats.initial_cost());
        for (k, v) in fixed {
            assert_eq!(p.value(&k).unwrap(), v, "{k} moved");
        }
    }
}

#[test]
fn numeric_and_analytic_solves_agree() {
    let size = ToySize { cameras: 3, object_points: 5, map_points: 8 };
    let mut a = toy_problem(77, size, 0.5);
    let mut n = a.clone();
    levenberg_marquardt(&mut a, &LmConfig::default()).unwrap();
    levenberg_marquardt(&mut n, &LmConfig { jacobian_mode: JacobianMode::Numeric, ..Default::default() }).unwrap();
    for (k, v) in a.variables() {
        let d = match (v.value, n.value(k).unwrap()) {
            (Value::Pose(x), Value::Pose(y)) => x.local(&y).amax(),
            (Value::Twist(x), Value::Twist(y)) => (x.to_vector() - y.to_vector()).amax(),
            (Value::Point(x), Value::Point(y)) => (x - y).amax(),
            _ => unreachable!("same problem"),
        };
        assert!(d < 1e-5, "{k}: {d:.3e}");
    }
}
