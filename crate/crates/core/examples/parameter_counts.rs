//! Parameter counts of object-centric dynamic points versus re-instantiating
//! every dynamic point in every frame, in closed form and by walking a problem.
//!
//! ```text
//! cargo run --release --example parameter_counts
//! ```

use objba::graph::parameter_counts;
use objba::simulator::{build_problem, generate, ProblemOptions, SceneConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("{:>5} {:>4} {:>5} {:>12} {:>15} {:>7}", "N_c", "N_o", "N_op", "per-frame", "object-centric", "ratio");
    for (n_c, n_o, n_op) in [(10, 1, 30), (10, 2, 30), (100, 2, 30), (100, 5, 100), (1000, 5, 100), (5, 10, 5)] {
        let c = parameter_counts(n_c, n_o, n_op, 0);
        println!("{:>5} {:>4} {:>5} {:>12} {:>15} {:>7.3}", n_c, n_o, n_op, c.baseline, c.object_centric, c.ratio());
    }

    let cfg = SceneConfig::default();
    let problem = build_problem(&generate(&cfg)?, &ProblemOptions::default())?;
    let e = problem.enumerate_dofs();
    let formula = parameter_counts(cfg.n_frames as u64, cfg.objects.len() as u64, cfg.objects[0].points as u64, 0);
    println!("default scene, counted from its variables:");
    println!(
        "  cameras {}, object poses {}, object twists {}, object points {}, map points {}",
        e.camera, e.object_pose, e.object_twist, e.object_point, e.map_point
    );
    println!(
        "  object-centric {} (closed form {}), per-frame {} (closed form {})",
        e.object_centric(),
        formula.object_centric,
        e.baseline(),
        formula.baseline
    );
    Ok(())
}
