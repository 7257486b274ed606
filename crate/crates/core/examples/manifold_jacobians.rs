//! Lie-group round trips and analytic factor Jacobians checked against central
//! differences on a generated scene.
//!
//! ```text
//! cargo run --release --example manifold_jacobians
//! ```

use nalgebra::{Vector3, Vector6};
use objba::graph::{FactorFamily, JacobianMode};
use objba::manifold::{delta_transform, exp_so3, log_so3, Pose, Twist};
use objba::simulator::{build_problem, generate, ProblemOptions, SceneConfig};
use std::collections::BTreeMap;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for angle in [1e-9, 1e-3, 0.5, 2.0, std::f64::consts::PI - 1e-6] {
        let w = Vector3::new(0.3, -0.8, 0.5).normalize() * angle;
        let back = log_so3(&exp_so3(&w));
        println!("|log(exp(w)) - w| at |w| = {angle:<10.3e} -> {:.2e}", (back - w).norm());
    }

    let a = Pose::from_axis_angle(Vector3::new(0.1, 0.4, -0.2), Vector3::new(1.0, -2.0, 3.0));
    let delta = Vector6::new(0.05, -0.02, 0.1, 0.01, 0.03, -0.02);
    println!("|local(a, retract(a, d)) - d| = {:.2e}", (a.local(&a.retract(&delta)) - delta).norm());

    let twist = Twist::new(Vector3::new(0.0, 0.0, 4.0), Vector3::new(0.0, 0.15, 0.0));
    let step = delta_transform(&twist, 0.1)?;
    println!(
        "one 0.1 s step at 4 m/s, 0.15 rad/s: moved {:.4} m, turned {:.4} rad",
        step.translation.norm(),
        step.rotation.angle()
    );

    let ds = generate(&SceneConfig::default())?;
    let problem = build_problem(&ds, &ProblemOptions::default())?;
    let mut worst: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for factor in problem.factors() {
        let analytic = factor.linearize(&problem, JacobianMode::Analytic)?;
        let numeric = factor.linearize(&problem, JacobianMode::Numeric)?;
        let mut err: f64 = 0.0;
        for (ja, jn) in analytic.jacobians.iter().zip(&numeric.jacobians) {
            err = err.max((ja - jn).amax() / (1.0 + jn.amax()));
        }
        let family = match factor.family() {
            FactorFamily::StaticReprojection => "static reprojection",
            FactorFamily::ObjectReprojection => "object reprojection",
            FactorFamily::ConstantVelocity => "constant velocity",
            FactorFamily::VelocityCoupling => "velocity coupling",
        };
        let entry = worst.entry(family.to_string()).or_insert((0.0, 0));
        entry.0 = entry.0.max(err);
        entry.1 += 1;
    }
    for (family, (err, n)) in worst {
        println!("{family:<20} {n:>5} factors, worst scaled |analytic - numeric| {err:.2e}");
    }
    Ok(())
}
